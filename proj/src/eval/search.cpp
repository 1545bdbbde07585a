#include "mcm/eval/search.hpp"

#include "mcm/errors.hpp"
#include "mcm/eval/predict.hpp"
#include "parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

namespace mcm::eval {

using json = nlohmann::ordered_json;

namespace {

std::string config_text(const trainer::TrainConfig& c) {
  std::ostringstream s;
  c.write(s);
  return s.str();
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw std::invalid_argument("search space values must be strings, numbers or booleans");
}

} // namespace

void SearchSpace::validate() const {
  if (dims.empty()) throw std::invalid_argument("search space is empty");
  for (const auto& [key, values] : dims) {
    if (values.empty()) throw std::invalid_argument("search space '" + key + "' has no values");
    for (const auto& v : values) {
      trainer::TrainConfig c;
      c.set(key, v);
    }
  }
}

SearchSpace SearchSpace::defaults(priors::PriorKind prior, trainer::Mode mode) {
  SearchSpace s;
  const std::vector<std::string> schedulers9{"0", "1", "2", "3", "4", "5", "6", "7", "8"};
  if (mode == trainer::Mode::Mle) {
    s.dims = {{"lr", {"0.01", "0.001", "0.0001", "0.0005", "0.00005"}},
              {"latent_dim", {"4", "8", "16"}},
              {"scheduler", schedulers9},
              {"dropout", {"0", "0.1"}},
              {"embedding_dim", {"16", "32", "64", "128"}},
              {"layers", {"1", "2", "4", "6", "8"}},
              {"skip", {"none", "1", "2"}}};
    return s;
  }
  s.dims = {{"loss", {"kl", "entropy"}},
            {"lr", {"0.005", "0.001", "0.0005", "0.0001"}},
            {"latent_dim", {"4", "8", "16"}}};
  if (prior == priors::PriorKind::Gnn) {
    s.dims.push_back({"scheduler", schedulers9});
  } else {
    auto all = schedulers9;
    all.push_back("9");
    s.dims.push_back({"scheduler", all});
  }
  s.dims.push_back({"dropout", {"0", "0.1"}});
  s.dims.push_back({"embedding_dim", {"16", "32", "64", "128"}});
  if (prior == priors::PriorKind::Gnn) s.dims.push_back({"aggregation", {"sum", "mean"}});
  s.dims.push_back({"layers", {"1", "2", "4", "6", "8"}});
  s.dims.push_back({"skip", {"none", "1", "2"}});
  if (prior == priors::PriorKind::Gnn) s.dims.push_back({"bias", {"true", "false"}});
  return s;
}

SearchSpace SearchSpace::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("search space: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("search space: expected a JSON object");
  SearchSpace s;
  for (const auto& [key, values] : j.items()) {
    if (!values.is_array()) throw ParseError("search space: '" + key + "' must map to an array");
    std::vector<std::string> vs;
    try {
      for (const auto& v : values) vs.push_back(scalar_text(v));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("search space: ") + e.what());
    }
    s.dims.emplace_back(key, std::move(vs));
  }
  return s;
}

std::string SearchSpace::to_json() const {
  json j = json::object();
  for (const auto& [key, values] : dims) j[key] = values;
  return j.dump(2);
}

void SearchResult::write_trials(std::ostream& out) const {
  for (const auto& t : trials) {
    json j;
    j["trial"] = t.index;
    json params = json::object();
    for (const auto& [k, v] : t.sampled) params[k] = v;
    j["params"] = params;
    j["status"] = t.ok ? "ok" : "failed";
    j["duplicate_of"] = t.duplicate_of ? json(*t.duplicate_of) : json(nullptr);
    j["mse"] = t.ok ? json(t.mse) : json(nullptr);
    j["error"] = t.error;
    j["best"] = best && *best == t.index;
    out << j.dump() << '\n';
  }
}

double score_on_hyper_split(const trainer::TrainConfig& cfg, const model::ObservationTable& data,
                            const mol::MoleculeLibrary& lib, const HyperSplit& split) {
  const auto inputs = trainer::make_component_inputs(data, lib, cfg.prior);
  trainer::Trainer t(cfg, data, split.train, inputs, "search");
  if (cfg.mode == trainer::Mode::Mle) t.set_validation(split.validation);
  t.train();
  const auto model = t.model();
  const Matrix u = latent_means(model, true, inputs.solutes);
  const Matrix v = latent_means(model, false, inputs.solvents);
  std::vector<double> truth, pred;
  for (int k : split.test) {
    const auto& e = data.entries[static_cast<std::size_t>(k)];
    truth.push_back(e.ln_gamma);
    pred.push_back(u.row(e.solute).dot(v.row(e.solvent)));
  }
  const double mse = metrics(truth, pred).mse;
  if (!std::isfinite(mse)) throw NumericError("non-finite test MSE");
  return mse;
}

SearchResult random_grid_search(const SearchSpace& space, const trainer::TrainConfig& base,
                                const model::ObservationTable& data, const mol::MoleculeLibrary& lib, int trials,
                                std::uint64_t sample_seed, std::uint64_t split_seed, int jobs) {
  space.validate();
  if (trials < 1) throw std::invalid_argument("grid search needs at least one trial");
  data.validate();
  data.check_ids(lib);
  const HyperSplit split = make_hyper_split(data.size(), split_seed);
  if (split.train.empty() || split.test.empty()) throw DataError("grid search: dataset too small for a split");

  SearchResult result;
  std::mt19937_64 rng(sample_seed);
  std::map<std::string, int> first_seen;
  std::vector<int> unique;
  for (int k = 0; k < trials; ++k) {
    Trial t;
    t.index = k;
    t.config = base;
    for (const auto& [key, values] : space.dims) {
      const auto& v = values[std::uniform_int_distribution<std::size_t>(0, values.size() - 1)(rng)];
      t.sampled.emplace_back(key, v);
      t.config.set(key, v);
    }
    const auto [it, fresh] = first_seen.emplace(config_text(t.config), k);
    if (fresh) unique.push_back(k);
    else t.duplicate_of = it->second;
    result.trials.push_back(std::move(t));
  }

  detail::parallel_for(unique.size(), jobs, [&](std::size_t slot) {
    Trial& t = result.trials[static_cast<std::size_t>(unique[slot])];
    try {
      t.config.validate();
      t.mse = score_on_hyper_split(t.config, data, lib, split);
      t.ok = true;
    } catch (const std::exception& e) {
      t.ok = false;
      t.error = e.what();
    }
  });

  for (auto& t : result.trials) {
    if (!t.duplicate_of) continue;
    const Trial& src = result.trials[static_cast<std::size_t>(*t.duplicate_of)];
    t.ok = src.ok;
    t.mse = src.mse;
    t.error = src.error;
  }
  for (const auto& t : result.trials) {
    if (!t.ok || t.duplicate_of) continue;
    if (!result.best || t.mse < result.trials[static_cast<std::size_t>(*result.best)].mse) result.best = t.index;
  }
  return result;
}

} // namespace mcm::eval
