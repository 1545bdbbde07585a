#include "doctest.h"

#include "mcm/datagen/datagen.hpp"

#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace mcm;
using namespace mcm::datagen;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Residual of the least-squares affine fit of z on the formula features.
double affine_fit_residual(const PlantedWorld& w, const std::vector<std::string>& ids, const Matrix& z,
                           const std::vector<bool>& skip) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!skip[i]) rows.push_back(static_cast<Eigen::Index>(i));
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(mol::kFormulaFeatures) + 1);
  Matrix y(static_cast<Eigen::Index>(rows.size()), z.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = w.library.at(ids[static_cast<std::size_t>(rows[r])]).features;
    for (std::size_t c = 0; c < mol::kFormulaFeatures; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f.counts[c];
    x(static_cast<Eigen::Index>(r), x.cols() - 1) = 1.0;
    y.row(static_cast<Eigen::Index>(r)) = z.row(rows[r]);
  }
  const Matrix coef = x.completeOrthogonalDecomposition().solve(y);
  return (x * coef - y).cwiseAbs().maxCoeff();
}

} // namespace

TEST_CASE("random graphs respect valences and the heavy atom range") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 500; ++t) {
    const auto g = random_graph(rng, 2, 12);
    std::vector<double> order(g.atom_count(), 0.0);
    for (const auto& b : g.bonds()) {
      const double o = b.type == mol::Bond::Aromatic ? 1.5 : static_cast<double>(mol::bond_code(b.type));
      order[static_cast<std::size_t>(b.a)] += o;
      order[static_cast<std::size_t>(b.b)] += o;
    }
    int heavy = 0;
    for (std::size_t k = 0; k < g.atom_count(); ++k) {
      CHECK(order[k] == mol::default_valence(g.atoms()[k]));
      heavy += g.atoms()[k] != mol::Atom::H;
    }
    CHECK(heavy >= 2);
    CHECK(heavy <= 12);
    CHECK_NOTHROW(mol::parse_graph(mol::format_graph(g)));
  }
}

TEST_CASE("full density observes every pair") {
  WorldSpec s;
  s.solutes = 7;
  s.solvents = 5;
  s.density = 1.0;
  const auto w = generate(s, 1);
  CHECK(w.table.size() == 35u);
}

TEST_CASE("sparse masks still cover every component") {
  WorldSpec s;
  s.solutes = 40;
  s.solvents = 30;
  s.density = 0.01;
  const auto w = generate(s, 2);
  std::set<int> rows, cols;
  for (const auto& e : w.table.entries) {
    rows.insert(e.solute);
    cols.insert(e.solvent);
  }
  CHECK(rows.size() == 40u);
  CHECK(cols.size() == 30u);
}

TEST_CASE("without anomalies latents are affine in the formula features") {
  WorldSpec s;
  s.anomaly_fraction = 0.0;
  const auto w = generate(s, 3);
  const std::vector<bool> none_u(w.solute_ids.size(), false), none_v(w.solvent_ids.size(), false);
  CHECK(affine_fit_residual(w, w.solute_ids, w.u, none_u) < 1e-9);
  CHECK(affine_fit_residual(w, w.solvent_ids, w.v, none_v) < 1e-9);
  const double mean = w.u.mean();
  CHECK(std::sqrt((w.u.array() - mean).square().mean()) == doctest::Approx(s.latent_std).epsilon(1e-12));
}

TEST_CASE("anomalies are the only departures from the affine map") {
  WorldSpec s;
  const auto w = generate(s, 4);
  CHECK(std::count(w.solute_anomalous.begin(), w.solute_anomalous.end(), true) == 6);
  CHECK(std::count(w.solvent_anomalous.begin(), w.solvent_anomalous.end(), true) == 6);
  CHECK(affine_fit_residual(w, w.solute_ids, w.u, w.solute_anomalous) < 1e-9);
  CHECK(affine_fit_residual(w, w.solvent_ids, w.v, w.solvent_anomalous) < 1e-9);
  const std::vector<bool> none(w.solute_ids.size(), false);
  CHECK(affine_fit_residual(w, w.solute_ids, w.u, none) > 0.1);
}

TEST_CASE("zero noise reproduces the planted products") {
  WorldSpec s;
  s.noise = 0.0;
  const auto w = generate(s, 5);
  for (const auto& e : w.table.entries) CHECK(e.ln_gamma == w.planted(e.solute, e.solvent));
}

TEST_CASE("residual variance matches the noise level") {
  WorldSpec s;
  s.solutes = 150;
  s.solvents = 150;
  s.density = 0.5;
  const auto w = generate(s, 6);
  REQUIRE(w.table.size() >= 10000u);
  double sq = 0.0;
  for (const auto& e : w.table.entries) {
    const double r = e.ln_gamma - w.planted(e.solute, e.solvent);
    sq += r * r;
  }
  CHECK(std::abs(sq / static_cast<double>(w.table.size()) / (s.noise * s.noise) - 1.0) < 0.1);
}

TEST_CASE("regeneration is byte-identical and files round-trip") {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "mcm_test_datagen";
  fs::remove_all(base);
  WorldSpec s;
  s.solutes = 12;
  s.solvents = 9;
  write_world(generate(s, 7), (base / "a").string());
  write_world(generate(s, 7), (base / "b").string());
  write_world(generate(s, 8), (base / "c").string());
  for (const char* f : {kMoleculesFile, kObservationsFile, kGroundTruthFile}) {
    CHECK(slurp(base / "a" / f) == slurp(base / "b" / f));
    CHECK(slurp(base / "a" / f) != slurp(base / "c" / f));
  }

  const auto w = generate(s, 7);
  const auto lib = mol::MoleculeLibrary::load((base / "a" / kMoleculesFile).string());
  CHECK(lib.size() == 21u);
  const auto table = model::ObservationTable::load((base / "a" / kObservationsFile).string());
  REQUIRE(table.size() == w.table.size());
  CHECK_NOTHROW(table.check_ids(lib));
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& a = table.entries[k];
    const auto& b = w.table.entries[k];
    CHECK(table.solute_ids[static_cast<std::size_t>(a.solute)] == w.solute_ids[static_cast<std::size_t>(b.solute)]);
    CHECK(table.solvent_ids[static_cast<std::size_t>(a.solvent)] == w.solvent_ids[static_cast<std::size_t>(b.solvent)]);
    CHECK(a.ln_gamma == b.ln_gamma);
  }
  const auto g = load_ground_truth((base / "a" / kGroundTruthFile).string());
  CHECK(g.solute_ids == w.solute_ids);
  CHECK(g.solvent_anomalous == w.solvent_anomalous);
  CHECK(g.u == w.u);
  CHECK(g.v == w.v);
  fs::remove_all(base);

  std::istringstream bad("component_id,role,anomalous,z1\nx,catalyst,0,1.0\n");
  CHECK_THROWS_AS(read_ground_truth(bad), ParseError);
}

TEST_CASE("spec validation") {
  WorldSpec s;
  s.density = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.anomaly_fraction = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.solutes = 1;
  CHECK_THROWS_AS(generate(s, 0), std::invalid_argument);
}
