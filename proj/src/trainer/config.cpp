#include "mcm/trainer/config.hpp"

#include "mcm/errors.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace mcm::trainer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  int x = 0;
  try {
    x = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw std::invalid_argument(key + ": expected an integer, got '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || v[0] == '-' || used != v.size()) throw std::invalid_argument(key + ": expected a nonnegative integer, got '" + v + "'");
  return x;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (v.empty() || used != v.size()) throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

const char* to_string(Mode m) noexcept { return m == Mode::Vem ? "vem" : "mle"; }
const char* to_string(SplitBy s) noexcept { return s == SplitBy::Entry ? "entry" : "component"; }

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k = {
      "mode",      "prior",      "latent_dim", "embedding_dim",   "layers",   "aggregation",
      "skip",      "dropout",    "bias",       "activation",      "loss",     "lr",
      "scheduler", "batch_size", "epochs",     "seed",            "samples",  "lambda",
      "early_stop_every", "grad_clip", "sample_with_replacement", "log_every", "eval_mle", "split_by",
      "exclude_hp_test"};
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "mode") {
    if (v == "vem") mode = Mode::Vem;
    else if (v == "mle") mode = Mode::Mle;
    else throw std::invalid_argument("mode: expected vem or mle, got '" + v + "'");
  } else if (key == "prior") {
    prior = priors::prior_kind_from(v);
  } else if (key == "latent_dim") {
    latent_dim = to_int(key, v);
  } else if (key == "embedding_dim") {
    embedding_dim = to_int(key, v);
  } else if (key == "layers") {
    layers = to_int(key, v);
  } else if (key == "aggregation") {
    aggregation = priors::aggregation_from(v);
  } else if (key == "skip") {
    skip = v == "none" ? 0 : to_int(key, v);
  } else if (key == "dropout") {
    dropout = to_double(key, v);
  } else if (key == "bias") {
    bias = to_bool(key, v);
  } else if (key == "activation") {
    activation = priors::activation_from(v);
  } else if (key == "loss") {
    loss = model::elbo_variant_from(v);
  } else if (key == "lr") {
    lr = to_double(key, v);
  } else if (key == "scheduler") {
    scheduler = Schedule::parse(v);
  } else if (key == "batch_size") {
    batch_size = to_int(key, v);
  } else if (key == "epochs") {
    epochs = to_int(key, v);
  } else if (key == "seed") {
    seed = to_u64(key, v);
  } else if (key == "samples") {
    samples = to_int(key, v);
  } else if (key == "lambda") {
    lambda = to_double(key, v);
  } else if (key == "early_stop_every") {
    early_stop_every = to_int(key, v);
  } else if (key == "grad_clip") {
    grad_clip = to_double(key, v);
  } else if (key == "sample_with_replacement") {
    sample_with_replacement = to_bool(key, v);
  } else if (key == "log_every") {
    log_every = to_int(key, v);
  } else if (key == "eval_mle") {
    eval_mle = to_bool(key, v);
  } else if (key == "split_by") {
    if (v == "entry") split_by = SplitBy::Entry;
    else if (v == "component") split_by = SplitBy::Component;
    else throw std::invalid_argument("split_by: expected entry or component, got '" + v + "'");
  } else if (key == "exclude_hp_test") {
    exclude_hp_test = to_bool(key, v);
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

std::string TrainConfig::get(const std::string& key) const {
  if (key == "mode") return to_string(mode);
  if (key == "prior") return priors::to_string(prior);
  if (key == "latent_dim") return std::to_string(latent_dim);
  if (key == "embedding_dim") return std::to_string(embedding_dim);
  if (key == "layers") return std::to_string(layers);
  if (key == "aggregation") return priors::to_string(aggregation);
  if (key == "skip") return std::to_string(skip);
  if (key == "dropout") return fmt(dropout);
  if (key == "bias") return bias ? "true" : "false";
  if (key == "activation") return priors::to_string(activation);
  if (key == "loss") return model::to_string(loss);
  if (key == "lr") return fmt(lr);
  if (key == "scheduler") return scheduler.to_string();
  if (key == "batch_size") return std::to_string(batch_size);
  if (key == "epochs") return std::to_string(epochs);
  if (key == "seed") return std::to_string(seed);
  if (key == "samples") return std::to_string(samples);
  if (key == "lambda") return fmt(lambda);
  if (key == "early_stop_every") return std::to_string(early_stop_every);
  if (key == "grad_clip") return fmt(grad_clip);
  if (key == "sample_with_replacement") return sample_with_replacement ? "true" : "false";
  if (key == "log_every") return std::to_string(log_every);
  if (key == "eval_mle") return eval_mle ? "true" : "false";
  if (key == "split_by") return to_string(split_by);
  if (key == "exclude_hp_test") return exclude_hp_test ? "true" : "false";
  throw std::invalid_argument("unknown config key '" + key + "'");
}

void TrainConfig::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
  if (early_stop_every < 1) throw std::invalid_argument("early_stop_every must be >= 1");
  if (log_every < 1) throw std::invalid_argument("log_every must be >= 1");
  if (grad_clip < 0.0) throw std::invalid_argument("grad_clip must be >= 0");
  scheduler.validate();
  network().validate();
}

priors::NetworkConfig TrainConfig::network() const {
  priors::NetworkConfig n;
  n.kind = prior;
  n.width = embedding_dim;
  n.layers = layers;
  n.activation = activation;
  n.aggregation = aggregation;
  n.skip = skip;
  n.dropout = dropout;
  n.bias = bias;
  n.output = mode == Mode::Vem ? 2 * latent_dim : latent_dim;
  return n;
}

TrainConfig TrainConfig::parse(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", lineno);
    try {
      c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("config: ") + e.what(), lineno);
    }
  }
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  return parse(in);
}

void TrainConfig::write(std::ostream& out) const {
  for (const auto& k : keys()) out << k << " = " << get(k) << '\n';
}

} // namespace mcm::trainer
