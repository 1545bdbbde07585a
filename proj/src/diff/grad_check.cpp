#include "mcm/diff/grad_check.hpp"

#include "mcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace mcm::diff {

namespace {

double evaluate(const Recordable& f, ParamStore& store) {
  Tape tape(&store);
  return f(tape).scalar();
}

} // namespace

GradCheckResult grad_check(const Recordable& f, ParamStore& point, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");

  point.zero_grad();
  {
    Tape tape(&point);
    const Var out = f(tape);
    tape.backward(out);
    if (!std::isfinite(out.scalar())) {
      std::string names;
      for (const auto& entry : point) {
        if (entry.grad.allFinite()) continue;
        names += names.empty() ? entry.name : ", " + entry.name;
      }
      throw NumericError("grad_check: non-finite function value; non-finite gradients in: " +
                         (names.empty() ? std::string("(none)") : names));
    }
  }

  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (auto& entry : point) {
    if (!entry.name.starts_with(opts.prefix)) continue;
    const Eigen::Index n = entry.value.size();
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (opts.max_coords_per_entry && coords.size() > *opts.max_coords_per_entry) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(*opts.max_coords_per_entry);
      std::sort(coords.begin(), coords.end());
    }
    for (const Eigen::Index k : coords) {
      const double analytic = entry.grad.data()[k];
      if (!std::isfinite(analytic)) {
        throw NumericError("grad_check: non-finite gradient for " + entry.name + "[" + std::to_string(k) + "]");
      }
      double& x = entry.value.data()[k];
      const double saved = x;
      x = saved + opts.step;
      const double up = evaluate(f, point);
      x = saved - opts.step;
      const double down = evaluate(f, point);
      x = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite perturbed value for " + entry.name + "[" +
                           std::to_string(k) + "]");
      }
      const double numeric = (up - down) / (2.0 * opts.step);
      const double rel = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++result.coords_checked;
      if (rel > result.max_rel_error || result.worst_index < 0) {
        result.max_rel_error = rel;
        result.worst_param = entry.name;
        result.worst_index = k;
      }
    }
  }
  return result;
}

} // namespace mcm::diff
