#include "mcm/trainer/trainer.hpp"

#include "mcm/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace mcm::trainer {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Matrix randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = d(rng);
  }
  return m;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "\t" : "") + xs[i];
  return out;
}

std::vector<std::string> split_tabs(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto tab = s.find('\t', start);
    out.push_back(s.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) return out;
    start = tab + 1;
  }
}

std::string flags(const std::vector<bool>& xs) {
  std::string out;
  for (bool x : xs) out += x ? '1' : '0';
  return out;
}

std::vector<bool> parse_flags(const std::string& s, std::size_t n) {
  if (s.size() != n || s.find_first_not_of("01") != std::string::npos) throw DataError("archive: malformed seen flags");
  std::vector<bool> out;
  for (char c : s) out.push_back(c == '1');
  return out;
}

std::string exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

double parse_exact(const std::string& s) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw DataError("archive: bad number '" + s + "'");
  return x;
}

long parse_long(const std::string& s) {
  try {
    std::size_t used = 0;
    const long x = std::stol(s, &used);
    if (used == s.size()) return x;
  } catch (const std::exception&) {
  }
  throw DataError("archive: bad integer '" + s + "'");
}

void fill_template(ParamStore& store, const TrainConfig& cfg, int solutes, int solvents) {
  std::mt19937_64 rng(0);
  priors::Network(cfg.network(), kSolutePrefix).init_params(store, rng);
  priors::Network(cfg.network(), kSolventPrefix).init_params(store, rng);
  if (cfg.mode == Mode::Vem) {
    const int k = cfg.latent_dim;
    model::VariationalState{Matrix::Zero(solutes, k), Matrix::Zero(solutes, k), Matrix::Zero(solvents, k),
                            Matrix::Zero(solvents, k)}
        .add_to(store);
  }
}

} // namespace

ComponentInputs make_component_inputs(const model::ObservationTable& data, const mol::MoleculeLibrary& lib,
                                      priors::PriorKind kind) {
  auto gather = [&](const std::vector<std::string>& ids) {
    std::vector<const mol::Molecule*> ms;
    for (const auto& id : ids) ms.push_back(&lib.at(id));
    return priors::make_input(ms, kind);
  };
  return {gather(data.solute_ids), gather(data.solvent_ids)};
}

priors::Network TrainedModel::network(bool solute) const {
  return {config.network(), solute ? kSolutePrefix : kSolventPrefix};
}

Matrix TrainedModel::structure_means(bool solute, const priors::NetworkInput& in) const {
  const Matrix out = priors::evaluate_outputs(network(solute), params, in);
  return out.leftCols(config.latent_dim);
}

model::VariationalState TrainedModel::state() const {
  if (!variational()) throw std::logic_error("MLE models have no variational state");
  return model::VariationalState::from(params);
}

void TrainedModel::write_to(priors::Archive& ar) const {
  ar.set_meta("kind", "mcm-model");
  for (const auto& k : TrainConfig::keys()) ar.set_meta("config." + k, config.get(k));
  ar.set_meta("solute_ids", join(solute_ids));
  ar.set_meta("solvent_ids", join(solvent_ids));
  ar.set_meta("solute_seen", flags(solute_seen));
  ar.set_meta("solvent_seen", flags(solvent_seen));
  priors::put_params(ar, params, "param:");
}

TrainedModel TrainedModel::read_from(const priors::Archive& ar) {
  TrainedModel m;
  if (ar.meta("kind") != "mcm-model") throw DataError("archive is not a model checkpoint");
  for (const auto& k : TrainConfig::keys()) {
    try {
      m.config.set(k, ar.require_meta("config." + k));
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("checkpoint config: ") + e.what());
    }
  }
  m.solute_ids = split_tabs(ar.require_meta("solute_ids"));
  m.solvent_ids = split_tabs(ar.require_meta("solvent_ids"));
  m.solute_seen = parse_flags(ar.require_meta("solute_seen"), m.solute_ids.size());
  m.solvent_seen = parse_flags(ar.require_meta("solvent_seen"), m.solvent_ids.size());
  fill_template(m.params, m.config, static_cast<int>(m.solute_ids.size()), static_cast<int>(m.solvent_ids.size()));
  priors::get_params(ar, m.params, "param:");
  return m;
}

priors::Archive TrainedModel::variational_archive() const {
  const auto q = state();
  priors::Archive ar;
  ar.set_meta("kind", "mcm-variational-state");
  ar.set_meta("latent_dim", std::to_string(config.latent_dim));
  ar.set_meta("solute_ids", join(solute_ids));
  ar.set_meta("solvent_ids", join(solvent_ids));
  ar.set_meta("solute_seen", flags(solute_seen));
  ar.set_meta("solvent_seen", flags(solvent_seen));
  ar.set_array("u_mean", q.u_mean);
  ar.set_array("u_logvar", q.u_logvar);
  ar.set_array("v_mean", q.v_mean);
  ar.set_array("v_logvar", q.v_logvar);
  return ar;
}

std::string LogRecord::to_json() const {
  nlohmann::ordered_json j;
  j["run_id"] = run_id;
  j["epoch"] = epoch;
  j["elbo_or_nll"] = objective;
  j["train_mae"] = train_mae;
  j["train_mse"] = train_mse;
  j["lr"] = lr;
  return j.dump();
}

Trainer::Trainer(TrainConfig cfg, const model::ObservationTable& data, std::vector<int> train, ComponentInputs inputs,
                 std::string run_id)
    : cfg_(std::move(cfg)),
      data_(&data),
      train_(std::move(train)),
      inputs_(std::move(inputs)),
      run_id_(std::move(run_id)),
      net_u_(cfg_.network(), kSolutePrefix),
      net_v_(cfg_.network(), kSolventPrefix),
      rng_(cfg_.seed) {
  cfg_.validate();
  data.validate();
  if (train_.empty()) throw DataError("training set is empty");
  if (inputs_.solutes.count() != data.solutes() || inputs_.solvents.count() != data.solvents()) {
    throw DataError("component inputs do not match the observation table");
  }
  solute_seen_.assign(static_cast<std::size_t>(data.solutes()), false);
  solvent_seen_.assign(static_cast<std::size_t>(data.solvents()), false);
  for (int k : train_) {
    if (k < 0 || static_cast<std::size_t>(k) >= data.size()) throw DataError("training entry index out of range");
    solute_seen_[static_cast<std::size_t>(data.entries[static_cast<std::size_t>(k)].solute)] = true;
    solvent_seen_[static_cast<std::size_t>(data.entries[static_cast<std::size_t>(k)].solvent)] = true;
  }
  train_solutes_ = static_cast<double>(std::count(solute_seen_.begin(), solute_seen_.end(), true));
  train_solvents_ = static_cast<double>(std::count(solvent_seen_.begin(), solvent_seen_.end(), true));
  init_params();
  adam_.init(store_);
}

void Trainer::init_params() {
  net_u_.init_params(store_, rng_);
  net_v_.init_params(store_, rng_);
  if (cfg_.mode == Mode::Vem) {
    const int k = cfg_.latent_dim;
    Matrix um = randn(data_->solutes(), k, rng_, 0.1);
    Matrix vm = randn(data_->solvents(), k, rng_, 0.1);
    model::VariationalState{um, Matrix::Zero(data_->solutes(), k), vm, Matrix::Zero(data_->solvents(), k)}.add_to(store_);
  }
}

void Trainer::set_validation(std::vector<int> entries) {
  for (int k : entries) {
    if (k < 0 || static_cast<std::size_t>(k) >= data_->size()) throw DataError("validation entry index out of range");
  }
  validation_ = std::move(entries);
}

diff::Var Trainer::objective(diff::Tape& tape, std::span<const int> batch, std::span<const Matrix> eps_u,
                             std::span<const Matrix> eps_v, bool training_mode, ObjectiveTerm term) const {
  const priors::ForwardMode fm{training_mode, &rng_};
  diff::Var out_u = net_u_.forward(tape, inputs_.solutes, fm);
  diff::Var out_v = net_v_.forward(tape, inputs_.solvents, fm);
  if (cfg_.mode == Mode::Vem) {
    model::MinibatchInputs in;
    in.data = data_;
    in.batch = batch;
    in.prior_u = priors::gaussian_head(out_u, cfg_.latent_dim);
    in.prior_v = priors::gaussian_head(out_v, cfg_.latent_dim);
    in.q_u = model::posterior_vars(tape, true);
    in.q_v = model::posterior_vars(tape, false);
    in.eps_u = eps_u;
    in.eps_v = eps_v;
    in.variant = cfg_.loss;
    in.lambda = cfg_.lambda;
    in.data_size = static_cast<double>(train_.size());
    in.solute_count = train_solutes_;
    in.solvent_count = train_solvents_;
    const auto terms = model::elbo_minibatch(tape, in);
    switch (term) {
      case ObjectiveTerm::LogLik: return terms.loglik;
      case ObjectiveTerm::RegU: return terms.reg_u;
      case ObjectiveTerm::RegV: return terms.reg_v;
      case ObjectiveTerm::Total: break;
    }
    return terms.elbo;
  }
  if (term == ObjectiveTerm::RegU || term == ObjectiveTerm::RegV) {
    throw std::invalid_argument("MLE objective has no prior regularizer");
  }

  if (batch.empty()) throw std::invalid_argument("empty batch");
  std::vector<int> rows_u, rows_v;
  Matrix y(static_cast<Eigen::Index>(batch.size()), 1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& e = data_->entries.at(static_cast<std::size_t>(batch[b]));
    rows_u.push_back(e.solute);
    rows_v.push_back(e.solvent);
    y(static_cast<Eigen::Index>(b), 0) = e.ln_gamma;
  }
  diff::Var dots = diff::row_sum(diff::gather_rows(out_u, rows_u) * diff::gather_rows(out_v, rows_v));
  diff::Var sq = diff::sum(diff::square(tape.constant(std::move(y)) - dots));
  const double n = static_cast<double>(batch.size());
  const double scale = static_cast<double>(train_.size()) / n;
  const double log_norm = -0.5 * (kLog2Pi + 2.0 * std::log(cfg_.lambda));
  return scale * (n * log_norm - sq * (1.0 / (2.0 * cfg_.lambda * cfg_.lambda)));
}

double Trainer::step(std::span<const int> batch, double lr) {
  std::vector<Matrix> eps_u, eps_v;
  if (cfg_.mode == Mode::Vem) {
    const auto idx = model::batch_indices(*data_, batch);
    for (int s = 0; s < cfg_.samples; ++s) {
      eps_u.push_back(randn(static_cast<Eigen::Index>(idx.solutes.size()), cfg_.latent_dim, rng_));
      eps_v.push_back(randn(static_cast<Eigen::Index>(idx.solvents.size()), cfg_.latent_dim, rng_));
    }
  }
  store_.zero_grad();
  diff::Tape tape(&store_);
  diff::Var obj = objective(tape, batch, eps_u, eps_v, true);
  const double value = obj.scalar();
  if (!std::isfinite(value)) throw NumericError("non-finite training objective in run '" + run_id_ + "'");
  tape.backward(obj);
  if (cfg_.grad_clip > 0.0) clip_gradients(store_, cfg_.grad_clip);
  adam_.ascent_step(store_, lr);
  return value;
}

double Trainer::run_epoch() {
  const double lr = lr_at(cfg_.scheduler, epoch_, cfg_.epochs, cfg_.lr);
  const std::size_t m = static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t batches = (train_.size() + m - 1) / m;
  double total = 0.0;
  if (cfg_.sample_with_replacement) {
    std::uniform_int_distribution<std::size_t> pick(0, train_.size() - 1);
    std::vector<int> batch(std::min(m, train_.size()));
    for (std::size_t b = 0; b < batches; ++b) {
      for (auto& k : batch) k = train_[pick(rng_)];
      total += step(batch, lr);
    }
  } else {
    std::vector<int> order = train_;
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * m;
      const std::size_t hi = std::min(order.size(), lo + m);
      total += step(std::span<const int>(order.data() + lo, hi - lo), lr);
    }
  }
  ++epoch_;
  last_objective_ = total / static_cast<double>(batches);
  maybe_early_stop();
  return last_objective_;
}

void Trainer::train(const LogSink& sink) {
  while (epoch_ < cfg_.epochs) {
    const double lr = lr_at(cfg_.scheduler, epoch_, cfg_.epochs, cfg_.lr);
    const double obj = run_epoch();
    if (sink && (epoch_ % cfg_.log_every == 0 || epoch_ == cfg_.epochs)) {
      const auto [mae, mse] = errors(train_);
      sink({run_id_, epoch_, obj, mae, mse, lr});
    }
  }
}

Matrix Trainer::solute_means() const {
  if (cfg_.mode == Mode::Vem) return store_.value(model::VariationalState::kUMean);
  return priors::evaluate_outputs(net_u_, store_, inputs_.solutes);
}

Matrix Trainer::solvent_means() const {
  if (cfg_.mode == Mode::Vem) return store_.value(model::VariationalState::kVMean);
  return priors::evaluate_outputs(net_v_, store_, inputs_.solvents);
}

std::pair<double, double> Trainer::errors(std::span<const int> entries) const {
  if (entries.empty()) return {0.0, 0.0};
  const Matrix u = solute_means();
  const Matrix v = solvent_means();
  double abs_sum = 0.0, sq_sum = 0.0;
  for (int k : entries) {
    const auto& e = data_->entries.at(static_cast<std::size_t>(k));
    const double r = e.ln_gamma - u.row(e.solute).dot(v.row(e.solvent));
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const double n = static_cast<double>(entries.size());
  return {abs_sum / n, sq_sum / n};
}

double Trainer::validation_mse() const { return errors(validation_).second; }

void Trainer::maybe_early_stop() {
  if (cfg_.mode != Mode::Mle || validation_.empty()) return;
  if (epoch_ % cfg_.early_stop_every != 0 && epoch_ != cfg_.epochs) return;
  const double mse = validation_mse();
  if (!best_ || mse < best_val_mse_) {
    best_ = store_;
    best_val_mse_ = mse;
    best_epoch_ = epoch_;
  }
}

TrainedModel Trainer::model() const {
  TrainedModel m;
  m.config = cfg_;
  m.solute_ids = data_->solute_ids;
  m.solvent_ids = data_->solvent_ids;
  m.solute_seen = solute_seen_;
  m.solvent_seen = solvent_seen_;
  m.params = best_ ? *best_ : store_;
  return m;
}

void Trainer::save_state(priors::Archive& ar) const {
  model().write_to(ar);
  ar.set_meta("trainer.run_id", run_id_);
  ar.set_meta("trainer.epoch", std::to_string(epoch_));
  ar.set_meta("trainer.adam_steps", std::to_string(adam_.steps()));
  std::ostringstream rng;
  rng << rng_;
  ar.set_meta("trainer.rng", rng.str());
  ar.set_meta("trainer.best_epoch", std::to_string(best_epoch_));
  ar.set_meta("trainer.best_val_mse", exact(best_val_mse_));
  priors::put_params(ar, store_, "current:");
  for (std::size_t i = 0; i < store_.size(); ++i) {
    ar.set_array("adam_m:" + store_.entry(i).name, adam_.first()[i]);
    ar.set_array("adam_v:" + store_.entry(i).name, adam_.second()[i]);
  }
  if (best_) priors::put_params(ar, *best_, "best:");
}

void Trainer::restore_state(const priors::Archive& ar) {
  const auto saved = TrainedModel::read_from(ar);
  for (const auto& k : TrainConfig::keys()) {
    if (k != "epochs" && k != "log_every" && saved.config.get(k) != cfg_.get(k)) {
      throw DataError("checkpoint config differs from the run config at '" + k + "'");
    }
  }
  if (saved.solute_ids != data_->solute_ids || saved.solvent_ids != data_->solvent_ids) {
    throw DataError("checkpoint component ids differ from the observation table");
  }
  priors::get_params(ar, store_, "current:");
  adam_.init(store_);
  for (std::size_t i = 0; i < store_.size(); ++i) {
    adam_.first()[i] = ar.array("adam_m:" + store_.entry(i).name);
    adam_.second()[i] = ar.array("adam_v:" + store_.entry(i).name);
  }
  adam_.set_steps(parse_long(ar.require_meta("trainer.adam_steps")));
  epoch_ = static_cast<int>(parse_long(ar.require_meta("trainer.epoch")));
  std::istringstream rng(ar.require_meta("trainer.rng"));
  rng >> rng_;
  if (!rng) throw DataError("checkpoint: bad rng state");
  best_epoch_ = static_cast<int>(parse_long(ar.require_meta("trainer.best_epoch")));
  best_val_mse_ = parse_exact(ar.require_meta("trainer.best_val_mse"));
  best_.reset();
  if (best_epoch_ >= 0) {
    best_ = store_;
    priors::get_params(ar, *best_, "best:");
  }
}

} // namespace mcm::trainer
