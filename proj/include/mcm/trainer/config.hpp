#pragma once

#include "mcm/model/elbo.hpp"
#include "mcm/priors/network.hpp"
#include "mcm/trainer/schedule.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mcm::trainer {

enum class Mode { Vem, Mle };
enum class SplitBy { Entry, Component };

/// Every knob of one training run plus the evaluation protocol switches.
/// Text form is flat `key = value` lines; see keys().
struct TrainConfig {
  Mode mode = Mode::Vem;
  priors::PriorKind prior = priors::PriorKind::Mofo;
  int latent_dim = 8;
  int embedding_dim = 32;
  int layers = 2;
  priors::Aggregation aggregation = priors::Aggregation::Sum;
  int skip = 0;
  double dropout = 0.0;
  bool bias = true;
  priors::Activation activation = priors::Activation::Tanh;
  model::ElboVariant loss = model::ElboVariant::KL;
  double lr = 1e-3;
  Schedule scheduler;
  int batch_size = 512;
  int epochs = 15000;
  std::uint64_t seed = 0;
  int samples = 1;
  double lambda = model::kDefaultLambda;
  int early_stop_every = 10;
  double grad_clip = 0.0;
  bool sample_with_replacement = false;
  int log_every = 100;
  // Evaluation protocol.
  bool eval_mle = false;
  SplitBy split_by = SplitBy::Entry;
  bool exclude_hp_test = true;

  static const std::vector<std::string>& keys();

  /// Throws std::invalid_argument for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Throws std::invalid_argument when values are out of range.
  void validate() const;

  priors::NetworkConfig network() const;

  /// `key = value` lines; '#' starts a comment. ParseError carries the line.
  static TrainConfig parse(std::istream& in);
  static TrainConfig load(const std::string& path);
  void write(std::ostream& out) const;
};

const char* to_string(Mode m) noexcept;
const char* to_string(SplitBy s) noexcept;

} // namespace mcm::trainer
