#include "mcm/eval/groups.hpp"

#include "mcm/errors.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <unordered_map>

namespace mcm::eval {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct Paired {
  const ReportEntry* method;
  double baseline_error;
};

std::vector<Paired> pair_reports(const CvReport& method, const CvReport& baseline) {
  std::unordered_map<int, const ReportEntry*> base;
  for (const auto& e : baseline.entries) base[e.entry_index] = &e;
  if (base.size() != baseline.entries.size()) throw DataError("baseline report repeats an entry index");
  if (method.entries.size() != baseline.entries.size()) throw DataError("reports cover different entries");
  std::vector<Paired> out;
  for (const auto& e : method.entries) {
    const auto it = base.find(e.entry_index);
    if (it == base.end()) throw DataError("entry " + std::to_string(e.entry_index) + " missing from baseline report");
    out.push_back({&e, std::abs(it->second->pred - it->second->truth)});
  }
  return out;
}

const std::string& component(const ReportEntry& e, Role role) { return role == Role::Solute ? e.solute_id : e.solvent_id; }

} // namespace

Role role_from(const std::string& s) {
  if (s == "solute") return Role::Solute;
  if (s == "solvent") return Role::Solvent;
  throw std::invalid_argument("role must be solute or solvent, got '" + s + "'");
}

std::map<std::string, std::string> read_labels(std::istream& in) {
  std::map<std::string, std::string> labels;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("labels: expected 2 columns", lineno);
    }
    const std::string id = trim(line.substr(0, comma));
    const std::string cat = trim(line.substr(comma + 1));
    if (!header) {
      if (id != "component_id" || cat != "category") throw ParseError("labels: expected header component_id,category", lineno);
      header = true;
      continue;
    }
    if (id.empty() || cat.empty()) throw ParseError("labels: empty field", lineno);
    if (!labels.emplace(id, cat).second) throw ParseError("labels: duplicate id '" + id + "'", lineno);
  }
  if (!header) throw ParseError("labels: missing header", lineno);
  return labels;
}

std::map<std::string, std::string> load_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels '" + path + "'");
  return read_labels(in);
}

std::vector<CategoryRow> group_by_category(const CvReport& method, const CvReport& baseline,
                                           const std::map<std::string, std::string>& labels, Role role,
                                           std::size_t small_sample) {
  std::map<std::string, CategoryRow> rows;
  for (const auto& p : pair_reports(method, baseline)) {
    const auto it = labels.find(component(*p.method, role));
    const std::string& cat = it == labels.end() ? std::string(kUnlabeled) : it->second;
    auto& r = rows[cat];
    r.category = cat;
    ++r.n;
    r.mae_method += std::abs(p.method->pred - p.method->truth);
    r.mae_baseline += p.baseline_error;
  }
  std::vector<CategoryRow> out;
  for (auto& [cat, r] : rows) {
    r.mae_method /= static_cast<double>(r.n);
    r.mae_baseline /= static_cast<double>(r.n);
    r.delta = r.mae_baseline - r.mae_method;
    r.small_sample = r.n < small_sample;
    out.push_back(r);
  }
  return out;
}

std::vector<FrequencyRow> group_by_frequency(const CvReport& method, const CvReport& baseline,
                                             const model::ObservationTable& data, Role role) {
  std::unordered_map<std::string, int> count;
  for (const auto& e : data.entries) {
    const auto& ids = role == Role::Solute ? data.solute_ids : data.solvent_ids;
    ++count[ids[static_cast<std::size_t>(role == Role::Solute ? e.solute : e.solvent)]];
  }
  std::map<int, FrequencyRow> rows;
  for (const auto& p : pair_reports(method, baseline)) {
    const auto it = count.find(component(*p.method, role));
    if (it == count.end()) throw DataError("component '" + component(*p.method, role) + "' not in the data");
    auto& r = rows[it->second];
    r.frequency = it->second;
    ++r.n;
    r.mae_method += std::abs(p.method->pred - p.method->truth);
    r.mae_baseline += p.baseline_error;
  }
  std::vector<FrequencyRow> out;
  for (auto& [f, r] : rows) {
    r.mae_method /= static_cast<double>(r.n);
    r.mae_baseline /= static_cast<double>(r.n);
    r.delta = r.mae_baseline - r.mae_method;
    out.push_back(r);
  }
  return out;
}

} // namespace mcm::eval
