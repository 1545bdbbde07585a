#include "mcm/eval/splits.hpp"

#include "mcm/errors.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace mcm::eval {

namespace {

constexpr std::uint64_t kHyperSalt = 0x6a09e667f3bcc909ULL;

std::vector<int> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Start of decile k over n items.
std::size_t cut(std::size_t n, int k) { return n * static_cast<std::size_t>(k) / kFolds; }

} // namespace

HyperSplit make_hyper_split(std::size_t entries, std::uint64_t seed) {
  const auto order = shuffled(entries, seed ^ kHyperSalt);
  HyperSplit h;
  const std::size_t a = cut(entries, 8);
  const std::size_t b = cut(entries, 9);
  h.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(a));
  h.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(a), order.begin() + static_cast<std::ptrdiff_t>(b));
  h.test.assign(order.begin() + static_cast<std::ptrdiff_t>(b), order.end());
  for (auto* part : {&h.train, &h.validation, &h.test}) std::sort(part->begin(), part->end());
  return h;
}

SplitPlan make_splits(const model::ObservationTable& data, std::uint64_t seed, trainer::SplitBy by) {
  const std::size_t n = data.size();
  if (n < static_cast<std::size_t>(kFolds)) throw DataError("splits: need at least 10 entries");

  // decile[e] in 0..9 for every entry.
  std::vector<int> decile(n);
  if (by == trainer::SplitBy::Entry) {
    const auto order = shuffled(n, seed);
    for (int k = 0; k < kFolds; ++k)
      for (std::size_t p = cut(n, k); p < cut(n, k + 1); ++p) decile[static_cast<std::size_t>(order[p])] = k;
  } else {
    const auto m = static_cast<std::size_t>(data.solutes());
    if (m < static_cast<std::size_t>(kFolds)) throw DataError("splits: need at least 10 solutes to split by component");
    const auto order = shuffled(m, seed);
    std::vector<int> group(m);
    for (int k = 0; k < kFolds; ++k)
      for (std::size_t p = cut(m, k); p < cut(m, k + 1); ++p) group[static_cast<std::size_t>(order[p])] = k;
    for (std::size_t e = 0; e < n; ++e) decile[e] = group[static_cast<std::size_t>(data.entries[e].solute)];
  }

  SplitPlan plan;
  plan.folds.resize(kFolds);
  for (std::size_t e = 0; e < n; ++e) {
    const int d = decile[e];
    for (int k = 0; k < kFolds; ++k) {
      auto& f = plan.folds[static_cast<std::size_t>(k)];
      if (d == k) f.test.push_back(static_cast<int>(e));
      else if (d == (k + 1) % kFolds) f.validation.push_back(static_cast<int>(e));
      else f.train.push_back(static_cast<int>(e));
    }
  }
  plan.hyper = make_hyper_split(n, seed);
  return plan;
}

} // namespace mcm::eval
