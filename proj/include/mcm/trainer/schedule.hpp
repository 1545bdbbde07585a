#pragma once

#include <string>

namespace mcm::trainer {

/// Learning-rate schedule over epochs.
struct Schedule {
  enum class Kind { Constant, RobbinsMonro, Cyclical, Step };

  Kind kind = Kind::Constant;
  // Robbins-Monro: eps0 / ((t - warmup) / b + a)^gamma after `warmup` epochs.
  double warmup = 0.0;
  double gamma = 1.0;
  double a = 1.0;
  double b = 1.0;
  // Cyclical: number of triangular cycles over the run.
  int cycles = 1;
  // Step: multiply by `gamma` every `period` epochs.
  int period = 1;

  static Schedule constant();
  static Schedule robbins_monro(double warmup, double gamma, double a, double b);
  static Schedule cyclical(int cycles);
  static Schedule step(double gamma, int period);

  /// Search-space ids: 0 constant, 1-3 Robbins-Monro table rows, 4-6 cyclical
  /// with 1, 2, 4 cycles, 7-9 step table rows.
  static Schedule from_id(int id);

  /// Accepts an id ("7") or an explicit spec: "constant", "rm:1500,0.5,1,150",
  /// "cyclical:2", "step:0.8,1500".
  static Schedule parse(const std::string& text);
  std::string to_string() const;

  /// Throws std::invalid_argument for parameters that can make lr_at <= 0.
  void validate() const;
};

/// Learning rate at epoch t (0-based) of a run of `epochs_total` epochs.
double lr_at(const Schedule& s, int t, int epochs_total, double eps0);

} // namespace mcm::trainer
