#include "mcm/datagen/datagen.hpp"

#include "mcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mcm::datagen {

using mol::Atom;
using mol::Bond;

void WorldSpec::validate() const {
  if (solutes < 2 || solvents < 2) throw std::invalid_argument("datagen: need at least 2 solutes and 2 solvents");
  if (latent_dim < 1) throw std::invalid_argument("datagen: latent_dim must be >= 1");
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("datagen: density must be in (0, 1]");
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction < 1.0)) {
    throw std::invalid_argument("datagen: anomaly_fraction must be in [0, 1)");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("datagen: noise must be >= 0");
  if (!(latent_std > 0.0)) throw std::invalid_argument("datagen: latent_std must be positive");
  if (!(anomaly_scale >= 0.0)) throw std::invalid_argument("datagen: anomaly_scale must be >= 0");
  if (min_heavy_atoms < 1 || max_heavy_atoms < min_heavy_atoms) {
    throw std::invalid_argument("datagen: bad heavy atom range");
  }
}

namespace {

struct Element {
  Atom atom;
  double weight;
};

constexpr Element kHeavy[] = {
    {Atom::C, 0.55}, {Atom::O, 0.12}, {Atom::N, 0.10}, {Atom::Cl, 0.05}, {Atom::F, 0.04}, {Atom::S, 0.04},
    {Atom::Br, 0.03}, {Atom::I, 0.02}, {Atom::P, 0.02}, {Atom::Si, 0.02}, {Atom::Sn, 0.01},
};

Atom draw_atom(std::mt19937_64& rng, int min_valence) {
  std::vector<double> w;
  for (const auto& e : kHeavy) w.push_back(mol::default_valence(e.atom) >= min_valence ? e.weight : 0.0);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return kHeavy[pick(rng)].atom;
}

std::string padded(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, i);
  return buf;
}

/// Per-column standardization; constant columns map to zero.
Matrix standardize(const Matrix& f) {
  Matrix z = f;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    const double mean = f.col(c).mean();
    const double var = (f.col(c).array() - mean).square().mean();
    if (var <= 0.0) z.col(c).setZero();
    else z.col(c) = (f.col(c).array() - mean) / std::sqrt(var);
  }
  return z;
}

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

/// Affine map of standardized features, rescaled to the target entry std.
Matrix planted_latents(const Matrix& z, int k, double latent_std, std::mt19937_64& rng) {
  const Matrix a = gaussian(rng, z.cols(), k);
  const Matrix b = gaussian(rng, 1, k);
  Matrix u = z * a;
  u.rowwise() += b.row(0);
  const double mean = u.mean();
  const double sd = std::sqrt((u.array() - mean).square().mean());
  return sd > 0.0 ? Matrix(u * (latent_std / sd)) : u;
}

std::vector<bool> add_anomalies(Matrix& u, double fraction, double magnitude, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(u.rows());
  std::vector<bool> flag(n, false);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < count; ++k) {
    const auto i = static_cast<Eigen::Index>(order[k]);
    flag[order[k]] = true;
    Matrix dir = gaussian(rng, 1, u.cols());
    while (dir.norm() == 0.0) dir = gaussian(rng, 1, u.cols());
    u.row(i) += dir.row(0) * (magnitude / dir.norm());
  }
  return flag;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

mol::MoleculeGraph random_graph(std::mt19937_64& rng, int min_heavy, int max_heavy) {
  const int heavy = std::uniform_int_distribution<int>(min_heavy, max_heavy)(rng);
  std::vector<Atom> atoms;
  std::vector<int> spare;
  std::vector<mol::BondSpec> bonds;
  std::bernoulli_distribution coin_ring(0.2);

  if (heavy >= 6 && coin_ring(rng)) {
    for (int k = 0; k < 6; ++k) {
      atoms.push_back(Atom::C);
      spare.push_back(1);
      bonds.push_back({k, (k + 1) % 6, Bond::Aromatic});
    }
  } else {
    const Atom first = draw_atom(rng, heavy > 1 ? 1 : 2);
    atoms.push_back(first);
    spare.push_back(mol::default_valence(first));
  }

  while (static_cast<int>(atoms.size()) < heavy) {
    const int total = std::accumulate(spare.begin(), spare.end(), 0);
    const bool more_after = static_cast<int>(atoms.size()) + 1 < heavy;
    const Atom a = draw_atom(rng, more_after && total <= 1 ? 2 : 1);
    std::vector<int> open;
    for (std::size_t k = 0; k < spare.size(); ++k)
      if (spare[k] > 0) open.push_back(static_cast<int>(k));
    const int host = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
    const int idx = static_cast<int>(atoms.size());
    atoms.push_back(a);
    spare.push_back(mol::default_valence(a) - 1);
    --spare[static_cast<std::size_t>(host)];
    bonds.push_back({host, idx, Bond::Single});
  }

  std::bernoulli_distribution upgrade(0.15);
  for (auto& b : bonds) {
    auto& sa = spare[static_cast<std::size_t>(b.a)];
    auto& sb = spare[static_cast<std::size_t>(b.b)];
    if (b.type != Bond::Single || sa < 1 || sb < 1 || !upgrade(rng)) continue;
    b.type = Bond::Double;
    --sa;
    --sb;
    if (sa >= 1 && sb >= 1 && upgrade(rng)) {
      b.type = Bond::Triple;
      --sa;
      --sb;
    }
  }

  std::bernoulli_distribution close(0.3);
  if (atoms.size() >= 4 && close(rng)) {
    auto bonded = [&](int x, int y) {
      return std::any_of(bonds.begin(), bonds.end(), [&](const mol::BondSpec& b) {
        return (b.a == x && b.b == y) || (b.a == y && b.b == x);
      });
    };
    std::vector<std::pair<int, int>> pairs;
    for (int x = 0; x < static_cast<int>(atoms.size()); ++x)
      for (int y = x + 1; y < static_cast<int>(atoms.size()); ++y)
        if (spare[static_cast<std::size_t>(x)] > 0 && spare[static_cast<std::size_t>(y)] > 0 && !bonded(x, y))
          pairs.emplace_back(x, y);
    if (!pairs.empty()) {
      const auto [x, y] = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
      bonds.push_back({x, y, Bond::Single});
      --spare[static_cast<std::size_t>(x)];
      --spare[static_cast<std::size_t>(y)];
    }
  }

  const int heavy_count = static_cast<int>(atoms.size());
  for (int k = 0; k < heavy_count; ++k) {
    for (int h = 0; h < spare[static_cast<std::size_t>(k)]; ++h) {
      bonds.push_back({k, static_cast<int>(atoms.size()), Bond::Single});
      atoms.push_back(Atom::H);
    }
  }
  return mol::MoleculeGraph(std::move(atoms), bonds);
}

PlantedWorld generate(const WorldSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  PlantedWorld w;
  w.spec = spec;
  const int m = spec.solutes;
  const int n = spec.solvents;
  const int width = std::max(3, static_cast<int>(std::to_string(std::max(m, n)).size()));

  Matrix features(m + n, static_cast<Eigen::Index>(mol::kFormulaFeatures));
  for (int k = 0; k < m + n; ++k) {
    const auto g = random_graph(rng, spec.min_heavy_atoms, spec.max_heavy_atoms);
    const std::string id = k < m ? padded("solute_", k, width) : padded("solvent_", k - m, width);
    auto molecule = mol::make_molecule(id, mol::RecordKind::Graph, mol::format_graph(g));
    for (std::size_t c = 0; c < mol::kFormulaFeatures; ++c) features(k, static_cast<Eigen::Index>(c)) = molecule.features.counts[c];
    w.library.add(std::move(molecule));
    (k < m ? w.solute_ids : w.solvent_ids).push_back(id);
  }

  const Matrix z = standardize(features);
  w.u = planted_latents(z.topRows(m), spec.latent_dim, spec.latent_std, rng);
  w.v = planted_latents(z.bottomRows(n), spec.latent_dim, spec.latent_std, rng);
  const double magnitude = spec.anomaly_scale * spec.latent_std;
  w.solute_anomalous = add_anomalies(w.u, spec.anomaly_fraction, magnitude, rng);
  w.solvent_anomalous = add_anomalies(w.v, spec.anomaly_fraction, magnitude, rng);

  std::vector<char> mask(static_cast<std::size_t>(m) * static_cast<std::size_t>(n), 0);
  auto at = [&](int i, int j) -> char& { return mask[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)]; };
  std::bernoulli_distribution keep(spec.density);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) at(i, j) = keep(rng) ? 1 : 0;
  for (int i = 0; i < m; ++i) {
    bool any = false;
    for (int j = 0; j < n; ++j) any = any || at(i, j);
    if (!any) at(i, std::uniform_int_distribution<int>(0, n - 1)(rng)) = 1;
  }
  for (int j = 0; j < n; ++j) {
    bool any = false;
    for (int i = 0; i < m; ++i) any = any || at(i, j);
    if (!any) at(std::uniform_int_distribution<int>(0, m - 1)(rng), j) = 1;
  }

  w.table.solute_ids = w.solute_ids;
  w.table.solvent_ids = w.solvent_ids;
  std::normal_distribution<double> eps(0.0, 1.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (at(i, j)) w.table.entries.push_back({i, j, w.planted(i, j) + spec.noise * eps(rng)});
  return w;
}

void write_ground_truth(const PlantedWorld& w, std::ostream& out) {
  out << "component_id,role,anomalous";
  for (int k = 0; k < w.u.cols(); ++k) out << ",z" << k + 1;
  out << '\n';
  auto rows = [&](const std::vector<std::string>& ids, const Matrix& z, const std::vector<bool>& anomalous, const char* role) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out << ids[i] << ',' << role << ',' << (anomalous[i] ? 1 : 0);
      for (Eigen::Index k = 0; k < z.cols(); ++k) out << ',' << fmt(z(static_cast<Eigen::Index>(i), k));
      out << '\n';
    }
  };
  rows(w.solute_ids, w.u, w.solute_anomalous, "solute");
  rows(w.solvent_ids, w.v, w.solvent_anomalous, "solvent");
}

void write_world(const PlantedWorld& w, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw DataError("cannot write '" + (fs::path(dir) / name).string() + "'");
    return f;
  };
  {
    auto f = open(kMoleculesFile);
    w.library.write(f);
  }
  {
    auto f = open(kObservationsFile);
    w.table.write_csv(f);
  }
  auto f = open(kGroundTruthFile);
  write_ground_truth(w, f);
}

GroundTruth read_ground_truth(std::istream& in) {
  GroundTruth g;
  std::vector<std::vector<double>> u_rows, v_rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t k = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (k == 0) {
      if (cols.size() < 4 || cols[0] != "component_id" || cols[1] != "role" || cols[2] != "anomalous") {
        throw ParseError("ground truth: expected header component_id,role,anomalous,z1..", lineno);
      }
      k = cols.size() - 3;
      continue;
    }
    if (cols.size() != k + 3) throw ParseError("ground truth: wrong column count", lineno);
    if (cols[2] != "0" && cols[2] != "1") throw ParseError("ground truth: anomalous must be 0 or 1", lineno);
    std::vector<double> z;
    for (std::size_t c = 3; c < cols.size(); ++c) {
      char* end = nullptr;
      const double x = std::strtod(cols[c].c_str(), &end);
      if (end == cols[c].c_str() || *end != '\0') throw ParseError("ground truth: bad number '" + cols[c] + "'", lineno);
      z.push_back(x);
    }
    if (cols[1] == "solute") {
      g.solute_ids.push_back(cols[0]);
      g.solute_anomalous.push_back(cols[2] == "1");
      u_rows.push_back(std::move(z));
    } else if (cols[1] == "solvent") {
      g.solvent_ids.push_back(cols[0]);
      g.solvent_anomalous.push_back(cols[2] == "1");
      v_rows.push_back(std::move(z));
    } else {
      throw ParseError("ground truth: role must be solute or solvent", lineno);
    }
  }
  if (k == 0) throw ParseError("ground truth: missing header", lineno);
  auto to_matrix = [k](const std::vector<std::vector<double>>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < k; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    return m;
  };
  g.u = to_matrix(u_rows);
  g.v = to_matrix(v_rows);
  return g;
}

GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground truth '" + path + "'");
  return read_ground_truth(in);
}

} // namespace mcm::datagen
