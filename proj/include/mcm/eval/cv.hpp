#pragma once

#include "mcm/eval/metrics.hpp"
#include "mcm/eval/splits.hpp"
#include "mcm/trainer/trainer.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mcm::eval {

/// One test entry of one fold. `pred` comes from the configured method;
/// `pred_prior` is the priors-only ablation (VEM runs) and `pred_mle` the
/// MLE-trained model (when eval_mle is set).
struct ReportEntry {
  int fold = 0;
  int entry_index = 0;
  std::string solute_id;
  std::string solvent_id;
  DomainTag tag = DomainTag::InDomain;
  double truth = 0.0;
  double pred = 0.0;
  std::optional<double> pred_prior;
  std::optional<double> pred_mle;
};

struct SummaryRow {
  std::string method;       ///< "vem", "prior" or "mle"
  std::optional<int> fold;  ///< nullopt for the pooled aggregate
  DomainTag split = DomainTag::InDomain;
  std::optional<Metrics> metrics;  ///< nullopt when the split is empty
};

struct CvReport {
  std::vector<ReportEntry> entries;
  std::vector<SummaryRow> summary;

  /// Per-fold and pooled metrics for every method present in the entries.
  static std::vector<SummaryRow> summarize(const std::vector<ReportEntry>& entries, const std::string& main_method);

  /// Line-delimited JSON: entry records, then summary records.
  void write(std::ostream& out) const;
  /// Reads entry records and recomputes nothing; throws ParseError with the line.
  static CvReport read(std::istream& in);
  static CvReport load(const std::string& path);

  const SummaryRow* find(const std::string& method, DomainTag split, std::optional<int> fold = std::nullopt) const;
};

struct CvOptions {
  int jobs = 1;
  /// Restrict to these folds (all when empty).
  std::vector<int> folds;
};

struct CvResult {
  CvReport report;
  SplitPlan plan;
  /// Training logs of every run, in fold order.
  std::vector<trainer::LogRecord> logs;
};

/// Seed of the run trained on fold `fold` with split seed `seed`.
std::uint64_t fold_seed(std::uint64_t seed, int fold);

/// Splits by cfg.split_by with cfg.seed, trains one model per fold (plus an
/// MLE model when cfg.eval_mle and mode is VEM), predicts every test entry
/// not in the hyperparameter test split (when cfg.exclude_hp_test).
CvResult evaluate_cv(const trainer::TrainConfig& cfg, const model::ObservationTable& data,
                     const mol::MoleculeLibrary& lib, const CvOptions& opts = {});

} // namespace mcm::eval
