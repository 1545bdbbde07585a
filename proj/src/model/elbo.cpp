#include "mcm/model/elbo.hpp"

#include "mcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mcm::model {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal(double x, double mean, double variance) {
  const double r = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance) + r * r / variance);
}

Matrix column(const std::vector<double>& xs) {
  Matrix m(static_cast<Eigen::Index>(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = xs[i];
  return m;
}

/// KL(q || p) summed over rows and columns.
Var kl_sum(Var q_mean, Var q_logvar, Var p_mean, Var p_var) {
  Var t = (diff::square(q_mean - p_mean) + diff::exp(q_logvar)) / p_var + diff::log(p_var) - q_logvar;
  return 0.5 * (diff::sum(t) - static_cast<double>(t.rows() * t.cols()));
}

/// E_q[ln p] + H[q] summed over rows and columns; equals -KL(q || p).
Var cross_entropy_plus_entropy(Var q_mean, Var q_logvar, Var p_mean, Var p_var) {
  const double n = static_cast<double>(q_mean.rows() * q_mean.cols());
  Var cross = -0.5 * (diff::sum(diff::log(p_var)) +
                      diff::sum((diff::square(q_mean - p_mean) + diff::exp(q_logvar)) / p_var)) -
              0.5 * kLog2Pi * n;
  Var entropy = 0.5 * diff::sum(q_logvar) + 0.5 * (kLog2Pi + 1.0) * n;
  return cross + entropy;
}

Var regularizer(ElboVariant variant, Var q_mean, Var q_logvar, Var p_mean, Var p_var) {
  return variant == ElboVariant::KL ? -kl_sum(q_mean, q_logvar, p_mean, p_var)
                                    : cross_entropy_plus_entropy(q_mean, q_logvar, p_mean, p_var);
}

void check_noise(std::span<const Matrix> eps, std::size_t rows, Eigen::Index k, const char* side) {
  for (const auto& e : eps) {
    if (e.rows() != static_cast<Eigen::Index>(rows) || e.cols() != k) {
      throw std::invalid_argument(std::string("elbo_minibatch: ") + side + " noise has the wrong shape");
    }
  }
}

} // namespace

double log_likelihood(double ln_gamma, const Eigen::VectorXd& u, const Eigen::VectorXd& v, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  return log_normal(ln_gamma, u.dot(v), lambda * lambda);
}

double kl_diag_gaussian(const DiagGaussian& q, const DiagGaussian& p) {
  q.validate();
  p.validate();
  if (q.dim() != p.dim()) throw std::invalid_argument("kl_diag_gaussian: dimension mismatch");
  double kl = 0.0;
  for (Eigen::Index a = 0; a < q.dim(); ++a) {
    const double d = q.mean(a) - p.mean(a);
    const double ratio = q.variance(a) / p.variance(a);
    kl += d * d / p.variance(a) + (ratio - 1.0 - std::log(ratio));
  }
  return 0.5 * kl;
}

Eigen::VectorXd reparam_sample(const DiagGaussian& q, const Eigen::VectorXd& eps) {
  if (eps.size() != q.dim()) throw std::invalid_argument("reparam_sample: dimension mismatch");
  return q.mean + q.variance.cwiseSqrt().cwiseProduct(eps);
}

DiagGaussian VariationalState::solute(int i) const {
  return {u_mean.row(i).transpose(), u_logvar.row(i).transpose().array().exp().matrix()};
}

DiagGaussian VariationalState::solvent(int j) const {
  return {v_mean.row(j).transpose(), v_logvar.row(j).transpose().array().exp().matrix()};
}

void VariationalState::validate(int solutes, int solvents, int k) const {
  auto check = [&](const Matrix& m, int rows, const char* what) {
    if (m.rows() != rows || m.cols() != k) {
      throw DataError(std::string("variational state: ") + what + " has shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" + std::to_string(k));
    }
    if (!m.allFinite()) throw DataError(std::string("variational state: non-finite ") + what);
  };
  check(u_mean, solutes, "u_mean");
  check(u_logvar, solutes, "u_logvar");
  check(v_mean, solvents, "v_mean");
  check(v_logvar, solvents, "v_logvar");
}

void VariationalState::add_to(ParamStore& store) const {
  store.add(kUMean, u_mean);
  store.add(kULogvar, u_logvar);
  store.add(kVMean, v_mean);
  store.add(kVLogvar, v_logvar);
}

VariationalState VariationalState::from(const ParamStore& store) {
  return {store.value(kUMean), store.value(kULogvar), store.value(kVMean), store.value(kVLogvar)};
}

PosteriorVars posterior_vars(Tape& tape, bool solute) {
  if (solute) return {tape.param(VariationalState::kUMean), tape.param(VariationalState::kULogvar)};
  return {tape.param(VariationalState::kVMean), tape.param(VariationalState::kVLogvar)};
}

const char* to_string(ElboVariant v) noexcept { return v == ElboVariant::KL ? "kl" : "entropy"; }

ElboVariant elbo_variant_from(const std::string& s) {
  if (s == "kl" || s == "elbo-kl") return ElboVariant::KL;
  if (s == "entropy" || s == "elbo-entropy") return ElboVariant::Entropy;
  throw std::invalid_argument("unknown loss '" + s + "' (expected kl or entropy)");
}

BatchIndices batch_indices(const ObservationTable& data, std::span<const int> batch) {
  BatchIndices idx;
  for (int k : batch) {
    const auto& e = data.entries.at(static_cast<std::size_t>(k));
    idx.solutes.push_back(e.solute);
    idx.solvents.push_back(e.solvent);
  }
  for (auto* v : {&idx.solutes, &idx.solvents}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  return idx;
}

ElboTerms elbo_minibatch(Tape& tape, const MinibatchInputs& in) {
  if (in.data == nullptr) throw std::invalid_argument("elbo_minibatch: no data");
  if (in.batch.empty()) throw std::invalid_argument("elbo_minibatch: empty batch");
  if (in.eps_u.empty() || in.eps_u.size() != in.eps_v.size()) {
    throw std::invalid_argument("elbo_minibatch: need the same positive number of noise samples per side");
  }
  if (!(in.lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  const auto& data = *in.data;
  const Eigen::Index k = in.q_u.mean.cols();
  const auto idx = batch_indices(data, in.batch);
  check_noise(in.eps_u, idx.solutes.size(), k, "solute");
  check_noise(in.eps_v, idx.solvents.size(), k, "solvent");

  std::vector<int> local_u(static_cast<std::size_t>(data.solutes()), -1);
  std::vector<int> local_v(static_cast<std::size_t>(data.solvents()), -1);
  for (std::size_t r = 0; r < idx.solutes.size(); ++r) local_u[static_cast<std::size_t>(idx.solutes[r])] = static_cast<int>(r);
  for (std::size_t r = 0; r < idx.solvents.size(); ++r) local_v[static_cast<std::size_t>(idx.solvents[r])] = static_cast<int>(r);

  std::vector<int> pos_u;
  std::vector<int> pos_v;
  std::vector<double> y;
  for (int b : in.batch) {
    const auto& e = data.entries[static_cast<std::size_t>(b)];
    pos_u.push_back(local_u[static_cast<std::size_t>(e.solute)]);
    pos_v.push_back(local_v[static_cast<std::size_t>(e.solvent)]);
    y.push_back(e.ln_gamma);
  }
  Var target = tape.constant(column(y));

  Var qu_mean = diff::gather_rows(in.q_u.mean, idx.solutes);
  Var qu_logvar = diff::gather_rows(in.q_u.logvar, idx.solutes);
  Var qv_mean = diff::gather_rows(in.q_v.mean, idx.solvents);
  Var qv_logvar = diff::gather_rows(in.q_v.logvar, idx.solvents);
  Var su = diff::exp(0.5 * qu_logvar);
  Var sv = diff::exp(0.5 * qv_logvar);

  Var sq{};
  for (std::size_t s = 0; s < in.eps_u.size(); ++s) {
    Var u = qu_mean + su * tape.constant(in.eps_u[s]);
    Var v = qv_mean + sv * tape.constant(in.eps_v[s]);
    Var dots = diff::row_sum(diff::gather_rows(u, pos_u) * diff::gather_rows(v, pos_v));
    Var term = diff::sum(diff::square(target - dots));
    sq = sq.tape ? sq + term : term;
  }

  const double batch_size = static_cast<double>(in.batch.size());
  const double samples = static_cast<double>(in.eps_u.size());
  const double data_size = in.data_size > 0.0 ? in.data_size : static_cast<double>(data.size());
  const double m_count = in.solute_count > 0.0 ? in.solute_count : static_cast<double>(data.solutes());
  const double n_count = in.solvent_count > 0.0 ? in.solvent_count : static_cast<double>(data.solvents());
  const double log_norm = -0.5 * (kLog2Pi + 2.0 * std::log(in.lambda));

  ElboTerms out;
  out.loglik = (data_size / batch_size) *
               (batch_size * log_norm - sq * (1.0 / (samples * 2.0 * in.lambda * in.lambda)));

  Var pu_mean = diff::gather_rows(in.prior_u.mean, idx.solutes);
  Var pu_var = diff::gather_rows(in.prior_u.variance, idx.solutes);
  Var pv_mean = diff::gather_rows(in.prior_v.mean, idx.solvents);
  Var pv_var = diff::gather_rows(in.prior_v.variance, idx.solvents);
  out.reg_u = (m_count / static_cast<double>(idx.solutes.size())) *
              regularizer(in.variant, qu_mean, qu_logvar, pu_mean, pu_var);
  out.reg_v = (n_count / static_cast<double>(idx.solvents.size())) *
              regularizer(in.variant, qv_mean, qv_logvar, pv_mean, pv_var);
  out.elbo = out.loglik + out.reg_u + out.reg_v;
  return out;
}

Var elbo_closed_form(Tape& tape, const ObservationTable& data, const GaussianVars& prior_u, const GaussianVars& prior_v,
                     const PosteriorVars& q_u, const PosteriorVars& q_v, double lambda) {
  if (data.entries.empty()) throw std::invalid_argument("elbo_closed_form: empty table");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  std::vector<int> rows_u;
  std::vector<int> rows_v;
  std::vector<double> y;
  for (const auto& e : data.entries) {
    rows_u.push_back(e.solute);
    rows_v.push_back(e.solvent);
    y.push_back(e.ln_gamma);
  }
  Var mu = diff::gather_rows(q_u.mean, rows_u);
  Var mv = diff::gather_rows(q_v.mean, rows_v);
  Var vu = diff::gather_rows(diff::exp(q_u.logvar), rows_u);
  Var vv = diff::gather_rows(diff::exp(q_v.logvar), rows_v);
  Var resid = tape.constant(column(y)) - diff::row_sum(mu * mv);
  Var expected_sq = diff::sum(diff::square(resid)) +
                    diff::sum(diff::square(mu) * vv + diff::square(mv) * vu + vu * vv);
  const double n = static_cast<double>(data.size());
  Var loglik = n * (-0.5 * (kLog2Pi + 2.0 * std::log(lambda))) - expected_sq * (1.0 / (2.0 * lambda * lambda));
  return loglik - kl_sum(q_u.mean, q_u.logvar, prior_u.mean, prior_u.variance) -
         kl_sum(q_v.mean, q_v.logvar, prior_v.mean, prior_v.variance);
}

double elbo_closed_form(const ObservationTable& data, const std::vector<DiagGaussian>& prior_u,
                        const std::vector<DiagGaussian>& prior_v, const VariationalState& q, double lambda) {
  auto stack = [](const std::vector<DiagGaussian>& ps, bool var) {
    if (ps.empty()) throw std::invalid_argument("elbo_closed_form: no priors");
    Matrix m(static_cast<Eigen::Index>(ps.size()), ps.front().dim());
    for (std::size_t r = 0; r < ps.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = var ? ps[r].variance : ps[r].mean;
    return m;
  };
  Tape tape;
  GaussianVars pu{tape.constant(stack(prior_u, false)), tape.constant(stack(prior_u, true))};
  GaussianVars pv{tape.constant(stack(prior_v, false)), tape.constant(stack(prior_v, true))};
  PosteriorVars qu{tape.constant(q.u_mean), tape.constant(q.u_logvar)};
  PosteriorVars qv{tape.constant(q.v_mean), tape.constant(q.v_logvar)};
  return elbo_closed_form(tape, data, pu, pv, qu, qv, lambda).scalar();
}

double log_marginal_likelihood_bruteforce(const ObservationTable& data, const DiagGaussian& prior_u,
                                          const DiagGaussian& prior_v, double lambda) {
  if (data.size() != 1 || prior_u.dim() != 1 || prior_v.dim() != 1) {
    throw std::invalid_argument("brute-force marginal likelihood needs one observation and K = 1");
  }
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  prior_u.validate();
  prior_v.validate();
  const double y = data.entries.front().ln_gamma;
  const double mu = prior_u.mean(0), vu = prior_u.variance(0);
  const double mv = prior_v.mean(0), vv = prior_v.variance(0);
  const double lo_u = mu - 8.0 * std::sqrt(vu), hi_u = mu + 8.0 * std::sqrt(vu);
  const double lo_v = mv - 8.0 * std::sqrt(vv), hi_v = mv + 8.0 * std::sqrt(vv);
  const double lambda2 = lambda * lambda;

  auto integrate = [&](int n) {
    const double hu = (hi_u - lo_u) / (n - 1);
    const double hv = (hi_v - lo_v) / (n - 1);
    std::vector<double> log_pv(static_cast<std::size_t>(n));
    std::vector<double> vs(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b) {
      vs[static_cast<std::size_t>(b)] = lo_v + hv * b;
      log_pv[static_cast<std::size_t>(b)] = log_normal(vs[static_cast<std::size_t>(b)], mv, vv) +
                                            ((b == 0 || b == n - 1) ? std::log(0.5) : 0.0);
    }
    // Two passes: find the max log term, then accumulate shifted exponentials.
    double peak = -std::numeric_limits<double>::infinity();
    std::vector<double> row(static_cast<std::size_t>(n));
    auto row_terms = [&](int a) {
      const double u = lo_u + hu * a;
      const double base = log_normal(u, mu, vu) + ((a == 0 || a == n - 1) ? std::log(0.5) : 0.0);
      for (int b = 0; b < n; ++b) {
        const double r = y - u * vs[static_cast<std::size_t>(b)];
        row[static_cast<std::size_t>(b)] = base + log_pv[static_cast<std::size_t>(b)] - 0.5 * r * r / lambda2;
      }
    };
    for (int a = 0; a < n; ++a) {
      row_terms(a);
      peak = std::max(peak, *std::max_element(row.begin(), row.end()));
    }
    double acc = 0.0;
    for (int a = 0; a < n; ++a) {
      row_terms(a);
      for (double t : row) acc += std::exp(t - peak);
    }
    return peak + std::log(acc) + std::log(hu * hv) - 0.5 * (kLog2Pi + std::log(lambda2));
  };

  double prev = integrate(201);
  for (int n = 401; n <= 12801; n = 2 * n - 1) {
    const double cur = integrate(n);
    if (std::abs(cur - prev) < 1e-10) return cur;
    prev = cur;
  }
  return prev;
}

} // namespace mcm::model
