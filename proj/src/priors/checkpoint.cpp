#include "mcm/priors/checkpoint.hpp"

#include "mcm/errors.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mcm::priors {

namespace {

void check_token(const std::string& s, const char* what) {
  if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
    throw std::invalid_argument(std::string("archive ") + what + " must be a nonempty token without whitespace: '" + s + "'");
  }
}

double parse_double(const std::string& tok, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError("archive: bad number '" + tok + "'", line);
  return v;
}

} // namespace

void Archive::set_meta(const std::string& key, const std::string& value) {
  check_token(key, "meta key");
  if (value.find('\n') != std::string::npos) throw std::invalid_argument("archive meta value contains a newline");
  for (auto& [k, v] : meta_) {
    if (k == key) {
      v = value;
      return;
    }
  }
  meta_.emplace_back(key, value);
}

std::optional<std::string> Archive::meta(const std::string& key) const {
  for (const auto& [k, v] : meta_) {
    if (k == key) return v;
  }
  return std::nullopt;
}

const std::string& Archive::require_meta(const std::string& key) const {
  for (const auto& [k, v] : meta_) {
    if (k == key) return v;
  }
  throw DataError("archive: missing meta key '" + key + "'");
}

void Archive::set_array(const std::string& name, diff::Matrix value) {
  check_token(name, "array name");
  for (auto& [n, m] : arrays_) {
    if (n == name) {
      m = std::move(value);
      return;
    }
  }
  arrays_.emplace_back(name, std::move(value));
}

bool Archive::has_array(const std::string& name) const {
  for (const auto& entry : arrays_) {
    if (entry.first == name) return true;
  }
  return false;
}

const diff::Matrix& Archive::array(const std::string& name) const {
  for (const auto& [n, m] : arrays_) {
    if (n == name) return m;
  }
  throw DataError("archive: missing array '" + name + "'");
}

void Archive::write(std::ostream& out) const {
  out << "mcm-archive " << kVersion << '\n';
  for (const auto& [k, v] : meta_) out << "meta " << k << ' ' << v << '\n';
  out << std::hexfloat;
  for (const auto& [name, m] : arrays_) {
    out << "array " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << m(i, j);
      out << '\n';
    }
  }
  out << std::defaultfloat << "end\n";
}

Archive Archive::read(std::istream& in) {
  Archive ar;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next()) throw ParseError("archive: empty input", 1);
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != "mcm-archive") throw ParseError("archive: bad header", lineno);
    if (version != kVersion) throw ParseError("archive: unsupported version " + std::to_string(version), lineno);
  }

  bool ended = false;
  while (next()) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("meta ", 0) == 0) {
      const auto sp = line.find(' ', 5);
      if (sp == std::string::npos) {
        ar.set_meta(line.substr(5), "");
      } else {
        ar.set_meta(line.substr(5, sp - 5), line.substr(sp + 1));
      }
      continue;
    }
    if (line.rfind("array ", 0) == 0) {
      std::istringstream hs(line.substr(6));
      std::string name;
      long rows = -1;
      long cols = -1;
      if (!(hs >> name >> rows >> cols) || rows < 0 || cols < 0) throw ParseError("archive: bad array header", lineno);
      diff::Matrix m(rows, cols);
      for (long i = 0; i < rows; ++i) {
        if (!next()) throw ParseError("archive: truncated array '" + name + "'", lineno);
        std::istringstream rs(line);
        std::string tok;
        for (long j = 0; j < cols; ++j) {
          if (!(rs >> tok)) throw ParseError("archive: short row in '" + name + "'", lineno);
          m(i, j) = parse_double(tok, lineno);
        }
        if (rs >> tok) throw ParseError("archive: long row in '" + name + "'", lineno);
      }
      ar.set_array(name, std::move(m));
      continue;
    }
    throw ParseError("archive: unexpected line", lineno);
  }
  if (!ended) throw ParseError("archive: missing end marker", lineno);
  return ar;
}

void Archive::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write(out);
  if (!out) throw DataError("failed writing '" + path + "'");
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read(in);
}

void put_params(Archive& ar, const diff::ParamStore& store, const std::string& tag) {
  for (const auto& e : store) ar.set_array(tag + e.name, e.value);
}

void get_params(const Archive& ar, diff::ParamStore& store, const std::string& tag) {
  for (auto& e : store) {
    const auto& m = ar.array(tag + e.name);
    if (m.rows() != e.value.rows() || m.cols() != e.value.cols()) {
      throw DataError("archive: shape mismatch for '" + e.name + "'");
    }
    e.value = m;
  }
}

} // namespace mcm::priors
