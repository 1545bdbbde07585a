#pragma once

#include "mcm/eval/cv.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace mcm::eval {

enum class Role { Solute, Solvent };

Role role_from(const std::string& s);

inline constexpr const char* kUnlabeled = "UNLABELED";
inline constexpr std::size_t kSmallSample = 10;

/// CSV `component_id,category`; throws ParseError with the line.
std::map<std::string, std::string> read_labels(std::istream& in);
std::map<std::string, std::string> load_labels(const std::string& path);

struct CategoryRow {
  std::string category;
  std::size_t n = 0;
  double mae_method = 0.0;
  double mae_baseline = 0.0;
  double delta = 0.0;  ///< mae_baseline - mae_method
  bool small_sample = false;
};

/// Both reports must cover the same entry indices (DataError otherwise).
/// Rows are sorted by category; components without a label go to UNLABELED.
std::vector<CategoryRow> group_by_category(const CvReport& method, const CvReport& baseline,
                                           const std::map<std::string, std::string>& labels, Role role = Role::Solute,
                                           std::size_t small_sample = kSmallSample);

struct FrequencyRow {
  int frequency = 0;  ///< occurrences of the component in the data
  std::size_t n = 0;  ///< test entries in this bucket
  double mae_method = 0.0;
  double mae_baseline = 0.0;
  double delta = 0.0;
};

/// Buckets test entries by how often their solute (or solvent) occurs in
/// `data`; one row per nonempty bucket, ascending.
std::vector<FrequencyRow> group_by_frequency(const CvReport& method, const CvReport& baseline,
                                             const model::ObservationTable& data, Role role = Role::Solute);

} // namespace mcm::eval
