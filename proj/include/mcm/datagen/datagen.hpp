#pragma once

#include "mcm/diff/tape.hpp"
#include "mcm/model/observations.hpp"
#include "mcm/mol/molecule.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace mcm::datagen {

using diff::Matrix;

struct WorldSpec {
  int solutes = 60;
  int solvents = 60;
  int latent_dim = 4;
  double noise = 0.15;
  double density = 0.3;
  double anomaly_fraction = 0.1;
  /// Anomaly offsets point in a random direction with Euclidean norm
  /// anomaly_scale * latent_std.
  double anomaly_scale = 3.0;
  double latent_std = 0.7;
  int min_heavy_atoms = 2;
  int max_heavy_atoms = 12;

  /// Throws std::invalid_argument when out of range.
  void validate() const;
};

/// A synthetic corpus with known latents. Solute i of the table is
/// molecule `solute_ids[i]`; likewise for solvents.
struct PlantedWorld {
  WorldSpec spec;
  mol::MoleculeLibrary library;
  std::vector<std::string> solute_ids;
  std::vector<std::string> solvent_ids;
  Matrix u;  ///< solutes x latent_dim
  Matrix v;  ///< solvents x latent_dim
  std::vector<bool> solute_anomalous;
  std::vector<bool> solvent_anomalous;
  model::ObservationTable table;

  /// Planted dot product for the given table indices.
  double planted(int solute, int solvent) const { return u.row(solute).dot(v.row(solvent)); }
};

/// Random connected graph with explicit hydrogens and valid valences.
mol::MoleculeGraph random_graph(std::mt19937_64& rng, int min_heavy, int max_heavy);

/// Deterministic in (spec, seed). Every solute and solvent has at least one
/// observation, so table indices coincide with generation order.
PlantedWorld generate(const WorldSpec& spec, std::uint64_t seed);

inline constexpr const char* kMoleculesFile = "molecules.tsv";
inline constexpr const char* kObservationsFile = "observations.csv";
inline constexpr const char* kGroundTruthFile = "ground_truth.csv";

/// Writes the three corpus files into `dir` (created when missing).
void write_world(const PlantedWorld& w, const std::string& dir);

struct GroundTruth {
  std::vector<std::string> solute_ids;
  std::vector<std::string> solvent_ids;
  Matrix u;
  Matrix v;
  std::vector<bool> solute_anomalous;
  std::vector<bool> solvent_anomalous;
};

/// CSV `component_id,role,anomalous,z1..zK`; throws ParseError with the line.
GroundTruth read_ground_truth(std::istream& in);
GroundTruth load_ground_truth(const std::string& path);
void write_ground_truth(const PlantedWorld& w, std::ostream& out);

} // namespace mcm::datagen
