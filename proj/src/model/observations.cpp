#include "mcm/model/observations.hpp"

#include "mcm/errors.hpp"
#include "mcm/mol/molecule.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace mcm::model {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int intern(const std::string& id, std::vector<std::string>& ids, std::unordered_map<std::string, int>& index) {
  auto [it, inserted] = index.try_emplace(id, static_cast<int>(ids.size()));
  if (inserted) ids.push_back(id);
  return it->second;
}

} // namespace

void ObservationTable::validate() const {
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const auto& e = entries[k];
    if (e.solute < 0 || e.solute >= solutes() || e.solvent < 0 || e.solvent >= solvents()) {
      throw DataError("observation " + std::to_string(k) + ": index out of range");
    }
    if (!std::isfinite(e.ln_gamma)) throw DataError("observation " + std::to_string(k) + ": non-finite ln_gamma");
  }
}

void ObservationTable::check_ids(const mol::MoleculeLibrary& lib) const {
  for (const auto* ids : {&solute_ids, &solvent_ids}) {
    for (const auto& id : *ids) {
      if (!lib.contains(id)) throw DataError("component '" + id + "' is not in the molecules file");
    }
  }
}

ObservationTable ObservationTable::subset(const std::vector<int>& entry_indices) const {
  ObservationTable t;
  t.solute_ids = solute_ids;
  t.solvent_ids = solvent_ids;
  t.entries.reserve(entry_indices.size());
  for (int k : entry_indices) t.entries.push_back(entries.at(static_cast<std::size_t>(k)));
  return t;
}

ObservationTable ObservationTable::read_csv(std::istream& in) {
  ObservationTable t;
  std::unordered_map<std::string, int> solute_index;
  std::unordered_map<std::string, int> solvent_index;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cols = split_csv(line);
    if (!header) {
      if (cols.size() != 3 || cols[0] != "solute_id" || cols[1] != "solvent_id" || cols[2] != "ln_gamma") {
        throw ParseError("observations: expected header solute_id,solvent_id,ln_gamma", lineno);
      }
      header = true;
      continue;
    }
    if (cols.size() != 3) throw ParseError("observations: expected 3 columns", lineno);
    if (cols[0].empty() || cols[1].empty()) throw ParseError("observations: empty component id", lineno);
    const char* begin = cols[2].c_str();
    char* end = nullptr;
    const double y = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(y)) {
      throw ParseError("observations: bad ln_gamma '" + cols[2] + "'", lineno);
    }
    t.entries.push_back({intern(cols[0], t.solute_ids, solute_index), intern(cols[1], t.solvent_ids, solvent_index), y});
  }
  if (!header) throw ParseError("observations: missing header", lineno);
  return t;
}

ObservationTable ObservationTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

void ObservationTable::write_csv(std::ostream& out) const {
  out << "solute_id,solvent_id,ln_gamma\n";
  char buf[40];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.ln_gamma);
    out << solute_ids[static_cast<std::size_t>(e.solute)] << ',' << solvent_ids[static_cast<std::size_t>(e.solvent)] << ','
        << buf << '\n';
  }
}

} // namespace mcm::model
