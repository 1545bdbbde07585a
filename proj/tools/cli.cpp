#include "mcm/cli/cli.hpp"

#include "mcm/datagen/datagen.hpp"
#include "mcm/diff/grad_check.hpp"
#include "mcm/errors.hpp"
#include "mcm/eval/cv.hpp"
#include "mcm/eval/groups.hpp"
#include "mcm/eval/predict.hpp"
#include "mcm/eval/search.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

namespace mcm::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// `--config` plus one `--<key>` override per TrainConfig key.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Config file with `key = value` lines")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Random seed (overrides the config)");
    for (const auto& key : trainer::TrainConfig::keys()) {
      if (key == "seed") continue;
      std::string names = "--" + key;
      std::string dashed = key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      if (dashed != key) names += ",--" + dashed;
      options[key] = app->add_option(names, overrides[key], "Config override")->group("Config overrides");
    }
  }

  trainer::TrainConfig resolve() const {
    trainer::TrainConfig cfg;
    if (!config_path.empty()) cfg = trainer::TrainConfig::load(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, overrides.at(key));
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

std::string fmt(const char* spec, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, x);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write '" + p.string() + "'");
  return f;
}

void write_text(const fs::path& p, const std::string& text) {
  auto f = open_out(p);
  f << text;
}

std::string config_text(const trainer::TrainConfig& c) {
  std::ostringstream s;
  c.write(s);
  return s.str();
}

struct Corpus {
  mol::MoleculeLibrary lib;
  model::ObservationTable table;
};

Corpus load_corpus(const std::string& molecules, const std::string& data) {
  Corpus c{mol::MoleculeLibrary::load(molecules), model::ObservationTable::load(data)};
  c.table.validate();
  c.table.check_ids(c.lib);
  return c;
}

std::string metric_cell(const eval::SummaryRow* r) {
  if (!r || !r->metrics) return "      -          -       0";
  char buf[96];
  std::snprintf(buf, sizeof buf, "%9.5f  %9.5f  %6zu", r->metrics->mae, r->metrics->mse, r->metrics->n);
  return buf;
}

void print_summary(const eval::CvReport& report, const std::vector<std::string>& methods, std::ostream& out) {
  out << "method  split        MAE        MSE       n\n";
  for (const auto& m : methods) {
    for (auto split : {eval::DomainTag::InDomain, eval::DomainTag::OutOfDomain}) {
      const auto* row = report.find(m, split);
      if (!row) continue;
      char head[32];
      std::snprintf(head, sizeof head, "%-7s %-5s", m.c_str(), split == eval::DomainTag::InDomain ? "in" : "out");
      out << head << ' ' << metric_cell(row) << '\n';
    }
  }
}

// ---------------------------------------------------------------- commands

struct DatagenArgs {
  std::string out;
  std::uint64_t seed = 0;
  datagen::WorldSpec spec;
};

int cmd_datagen(const DatagenArgs& a, std::ostream& out) {
  const auto world = datagen::generate(a.spec, a.seed);
  datagen::write_world(world, a.out);
  out << "wrote " << world.library.size() << " molecules and " << world.table.size() << " observations to " << a.out
      << '\n';
  return kOk;
}

struct TrainArgs {
  ConfigFlags cfg;
  std::string molecules, data, out, resume;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const auto cfg = a.cfg.resolve();
  const auto corpus = load_corpus(a.molecules, a.data);
  std::vector<int> all(corpus.table.size());
  std::iota(all.begin(), all.end(), 0);
  trainer::Trainer t(cfg, corpus.table, all, trainer::make_component_inputs(corpus.table, corpus.lib, cfg.prior),
                     "train");
  if (!a.resume.empty()) {
    t.restore_state(priors::Archive::load(a.resume));
    out << "resumed at epoch " << t.epoch() << '\n';
  }
  const fs::path dir(a.out);
  auto log = open_out(dir / "train_log.jsonl");
  t.train([&](const trainer::LogRecord& r) { log << r.to_json() << '\n'; });

  priors::Archive ckpt;
  t.save_state(ckpt);
  ckpt.save((dir / "checkpoint.mcm").string());
  const auto model = t.model();
  if (model.variational()) model.variational_archive().save((dir / "variational_state.mcm").string());
  write_text(dir / "config.cfg", config_text(cfg));

  const auto err = t.errors(all);
  out << "trained " << trainer::to_string(cfg.mode) << " (" << priors::to_string(cfg.prior) << ") for " << t.epoch()
      << " epochs on " << all.size() << " entries\n";
  out << "train MAE " << fmt("%.6g", err.first) << "  MSE " << fmt("%.6g", err.second) << '\n';
  out << "outputs in " << a.out << '\n';
  return kOk;
}

struct PredictArgs {
  std::string model, molecules, solute, solvent, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  auto model = trainer::TrainedModel::read_from(priors::Archive::load(a.model));
  std::optional<mol::MoleculeLibrary> lib;
  if (!a.molecules.empty()) lib = mol::MoleculeLibrary::load(a.molecules);
  const eval::Predictor p(std::move(model), lib ? &*lib : nullptr);
  const auto r = p.predict(a.solute, a.solvent);
  out << "solute   " << a.solute << " (" << eval::to_string(r.solute.tag) << ")\n";
  out << "solvent  " << a.solvent << " (" << eval::to_string(r.solvent.tag) << ")\n";
  out << "ln_gamma " << fmt("%.10g", r.value.ln_gamma) << '\n';
  out << "gamma    " << fmt("%.10g", r.value.gamma) << '\n';
  if (!a.out.empty()) {
    json j;
    j["solute"] = a.solute;
    j["solvent"] = a.solvent;
    j["solute_domain"] = eval::to_string(r.solute.tag);
    j["solvent_domain"] = eval::to_string(r.solvent.tag);
    j["ln_gamma"] = r.value.ln_gamma;
    j["gamma"] = r.value.gamma;
    write_text(a.out, j.dump() + "\n");
  }
  return kOk;
}

struct CvArgs {
  ConfigFlags cfg;
  std::string molecules, data, out;
  int jobs = 1;
  std::vector<int> folds;
};

int cmd_evaluate_cv(const CvArgs& a, std::ostream& out) {
  const auto cfg = a.cfg.resolve();
  const auto corpus = load_corpus(a.molecules, a.data);
  eval::CvOptions opts;
  opts.jobs = a.jobs;
  opts.folds = a.folds;
  const auto result = eval::evaluate_cv(cfg, corpus.table, corpus.lib, opts);
  const fs::path dir(a.out);
  {
    auto f = open_out(dir / "report.jsonl");
    result.report.write(f);
  }
  {
    auto f = open_out(dir / "train_log.jsonl");
    for (const auto& r : result.logs) f << r.to_json() << '\n';
  }
  write_text(dir / "config.cfg", config_text(cfg));
  std::vector<std::string> methods{trainer::to_string(cfg.mode)};
  if (cfg.mode == trainer::Mode::Vem) methods.push_back("prior");
  if (cfg.mode == trainer::Mode::Vem && cfg.eval_mle) methods.push_back("mle");
  out << result.report.entries.size() << " test entries over " << (a.folds.empty() ? eval::kFolds : static_cast<int>(a.folds.size()))
      << " folds\n";
  print_summary(result.report, methods, out);
  out << "report in " << (dir / "report.jsonl").string() << '\n';
  return kOk;
}

struct SearchArgs {
  ConfigFlags cfg;
  std::string molecules, data, out, space;
  int trials = 30;
  int jobs = 1;
};

int cmd_gridsearch(const SearchArgs& a, std::ostream& out) {
  const auto base = a.cfg.resolve();
  const auto corpus = load_corpus(a.molecules, a.data);
  eval::SearchSpace space;
  if (a.space.empty()) {
    space = eval::SearchSpace::defaults(base.prior, base.mode);
  } else {
    std::ifstream in(a.space);
    if (!in) throw DataError("cannot open search space '" + a.space + "'");
    std::stringstream s;
    s << in.rdbuf();
    space = eval::SearchSpace::from_json(s.str());
  }
  const auto r = eval::random_grid_search(space, base, corpus.table, corpus.lib, a.trials, base.seed, base.seed, a.jobs);
  const fs::path dir(a.out);
  {
    auto f = open_out(dir / "trials.jsonl");
    r.write_trials(f);
  }
  write_text(dir / "space.json", space.to_json() + "\n");
  const auto distinct = std::count_if(r.trials.begin(), r.trials.end(), [](const eval::Trial& t) { return !t.duplicate_of; });
  const auto failed = std::count_if(r.trials.begin(), r.trials.end(),
                                    [](const eval::Trial& t) { return !t.duplicate_of && !t.ok; });
  out << r.trials.size() << " trials, " << distinct << " distinct, " << failed << " failed\n";
  if (!r.best) {
    out << "no trial succeeded\n";
    return kNumeric;
  }
  const auto& best = r.trials[static_cast<std::size_t>(*r.best)];
  write_text(dir / "best.cfg", config_text(best.config));
  out << "best trial " << best.index << " test MSE " << fmt("%.6g", best.mse) << '\n';
  for (const auto& [k, v] : best.sampled) out << "  " << k << " = " << v << '\n';
  return kOk;
}

struct GradArgs {
  ConfigFlags cfg;
  std::string molecules, data;
  std::size_t coords = 16;
  double tol = 1e-4;
  int batch = 64;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  const auto cfg = a.cfg.resolve();
  Corpus corpus;
  if (!a.data.empty() || !a.molecules.empty()) {
    if (a.data.empty() || a.molecules.empty()) throw std::invalid_argument("gradcheck needs both --molecules and --data");
    corpus = load_corpus(a.molecules, a.data);
  } else {
    datagen::WorldSpec s;
    s.solutes = 12;
    s.solvents = 12;
    s.density = 0.5;
    s.max_heavy_atoms = 6;
    auto w = datagen::generate(s, cfg.seed);
    corpus = Corpus{std::move(w.library), std::move(w.table)};
  }
  std::vector<int> all(corpus.table.size());
  std::iota(all.begin(), all.end(), 0);
  trainer::Trainer t(cfg, corpus.table, all, trainer::make_component_inputs(corpus.table, corpus.lib, cfg.prior));

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> batch = all;
  std::shuffle(batch.begin(), batch.end(), rng);
  batch.resize(std::min<std::size_t>(batch.size(), static_cast<std::size_t>(std::max(a.batch, 1))));
  const auto idx = model::batch_indices(corpus.table, batch);
  std::normal_distribution<double> n(0.0, 1.0);
  auto noise = [&](std::size_t rows) {
    std::vector<diff::Matrix> eps;
    for (int s = 0; s < cfg.samples; ++s)
      eps.push_back(diff::Matrix::NullaryExpr(static_cast<Eigen::Index>(rows), cfg.latent_dim, [&] { return n(rng); }));
    return eps;
  };
  const auto eps_u = noise(idx.solutes.size());
  const auto eps_v = noise(idx.solvents.size());

  std::vector<std::pair<const char*, trainer::ObjectiveTerm>> terms;
  if (cfg.mode == trainer::Mode::Vem) {
    terms = {{"elbo", trainer::ObjectiveTerm::Total},
             {"loglik", trainer::ObjectiveTerm::LogLik},
             {"reg_u", trainer::ObjectiveTerm::RegU},
             {"reg_v", trainer::ObjectiveTerm::RegV}};
  } else {
    terms = {{"loglik", trainer::ObjectiveTerm::LogLik}};
  }
  diff::GradCheckOptions opts;
  opts.max_coords_per_entry = a.coords;
  opts.seed = cfg.seed;
  bool pass = true;
  out << "term      max_rel_error  worst_param\n";
  for (const auto& [name, term] : terms) {
    const auto r = diff::grad_check(
        [&, term = term](diff::Tape& tape) { return t.objective(tape, batch, eps_u, eps_v, false, term); }, t.params(),
        opts);
    char line[160];
    std::snprintf(line, sizeof line, "%-8s  %13.3e  %s", name, r.max_rel_error, r.worst_param.c_str());
    out << line << '\n';
    pass = pass && r.max_rel_error < a.tol;
  }
  out << (pass ? "all below " : "FAILED: some error above ") << fmt("%g", a.tol) << '\n';
  return pass ? kOk : kNumeric;
}

struct GroupArgs {
  std::string report, baseline, labels, data, role = "solute", out;
};

int cmd_report_groups(const GroupArgs& a, std::ostream& out) {
  if (a.labels.empty() && a.data.empty()) throw std::invalid_argument("report-groups needs --labels and/or --data");
  const auto method = eval::CvReport::load(a.report);
  const auto base = eval::CvReport::load(a.baseline);
  const auto role = eval::role_from(a.role);
  std::ostringstream records;
  if (!a.labels.empty()) {
    const auto rows = eval::group_by_category(method, base, eval::load_labels(a.labels), role);
    out << "category                      n   MAE_method  MAE_baseline  delta\n";
    for (const auto& r : rows) {
      char line[200];
      std::snprintf(line, sizeof line, "%-26s %4zu   %9.5f   %11.5f  %+.5f%s", r.category.c_str(), r.n, r.mae_method,
                    r.mae_baseline, r.delta, r.small_sample ? "  (small sample)" : "");
      out << line << '\n';
      json j;
      j["group"] = "category";
      j["category"] = r.category;
      j["n"] = r.n;
      j["mae_method"] = r.mae_method;
      j["mae_baseline"] = r.mae_baseline;
      j["delta_mae"] = r.delta;
      j["small_sample"] = r.small_sample;
      records << j.dump() << '\n';
    }
  }
  if (!a.data.empty()) {
    const auto table = model::ObservationTable::load(a.data);
    const auto rows = eval::group_by_frequency(method, base, table, role);
    out << "frequency     n   MAE_method  MAE_baseline  delta\n";
    for (const auto& r : rows) {
      char line[160];
      std::snprintf(line, sizeof line, "%9d %5zu   %9.5f   %11.5f  %+.5f", r.frequency, r.n, r.mae_method, r.mae_baseline,
                    r.delta);
      out << line << '\n';
      json j;
      j["group"] = "frequency";
      j["frequency"] = r.frequency;
      j["n"] = r.n;
      j["mae_method"] = r.mae_method;
      j["mae_baseline"] = r.mae_baseline;
      j["delta_mae"] = r.delta;
      records << j.dump() << '\n';
    }
  }
  if (!a.out.empty()) write_text(a.out, records.str());
  return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Activity coefficient prediction with structure-conditioned matrix completion", "mcm"};
  app.set_version_flag("--version", std::string("mcm ") + kVersion + " (archive format " +
                                        std::to_string(priors::Archive::kVersion) + ", report format 1)");
  app.require_subcommand(1, 1);

  DatagenArgs dg;
  auto* c_dg = app.add_subcommand("datagen", "Write a synthetic corpus with planted latents");
  c_dg->add_option("--out", dg.out, "Output directory")->required();
  c_dg->add_option("--seed", dg.seed, "Random seed");
  c_dg->add_option("--solutes", dg.spec.solutes);
  c_dg->add_option("--solvents", dg.spec.solvents);
  c_dg->add_option("--latent-dim", dg.spec.latent_dim);
  c_dg->add_option("--noise", dg.spec.noise, "Observation noise std");
  c_dg->add_option("--density", dg.spec.density, "Fraction of observed pairs");
  c_dg->add_option("--anomaly-fraction", dg.spec.anomaly_fraction);
  c_dg->add_option("--anomaly-scale", dg.spec.anomaly_scale);
  c_dg->add_option("--latent-std", dg.spec.latent_std);

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train on every entry of a table");
  tr.cfg.attach(c_tr);
  c_tr->add_option("--molecules", tr.molecules)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--data", tr.data)->required()->check(CLI::ExistingFile);
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  PredictArgs pr;
  auto* c_pr = app.add_subcommand("predict", "Predict ln gamma for one solute/solvent pair");
  c_pr->add_option("--model", pr.model, "checkpoint.mcm from train")->required()->check(CLI::ExistingFile);
  c_pr->add_option("--molecules", pr.molecules, "Library for ids unseen in training")->check(CLI::ExistingFile);
  c_pr->add_option("--solute", pr.solute, "id, SMILES:<s>, FORMULA:<f> or GRAPH:<g>")->required();
  c_pr->add_option("--solvent", pr.solvent, "id, SMILES:<s>, FORMULA:<f> or GRAPH:<g>")->required();
  c_pr->add_option("--out", pr.out, "Record file (JSON line)");

  CvArgs cv;
  auto* c_cv = app.add_subcommand("evaluate-cv", "Ten-fold cross-validation report");
  cv.cfg.attach(c_cv);
  c_cv->add_option("--molecules", cv.molecules)->required()->check(CLI::ExistingFile);
  c_cv->add_option("--data", cv.data)->required()->check(CLI::ExistingFile);
  c_cv->add_option("--out", cv.out, "Output directory")->required();
  c_cv->add_option("--jobs", cv.jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);
  c_cv->add_option("--folds", cv.folds, "Only these folds (0-9)")->check(CLI::Range(0, eval::kFolds - 1));

  SearchArgs gs;
  auto* c_gs = app.add_subcommand("gridsearch", "Random grid search on the hyperparameter split");
  gs.cfg.attach(c_gs);
  c_gs->add_option("--molecules", gs.molecules)->required()->check(CLI::ExistingFile);
  c_gs->add_option("--data", gs.data)->required()->check(CLI::ExistingFile);
  c_gs->add_option("--out", gs.out, "Output directory")->required();
  c_gs->add_option("--space", gs.space, "JSON search space (defaults to the published one)")->check(CLI::ExistingFile);
  c_gs->add_option("--trials", gs.trials)->check(CLI::PositiveNumber);
  c_gs->add_option("--jobs", gs.jobs, "Trials trained concurrently")->check(CLI::PositiveNumber);

  GradArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference check of every objective term");
  gc.cfg.attach(c_gc);
  c_gc->add_option("--molecules", gc.molecules)->check(CLI::ExistingFile);
  c_gc->add_option("--data", gc.data)->check(CLI::ExistingFile);
  c_gc->add_option("--coords", gc.coords, "Coordinates checked per parameter");
  c_gc->add_option("--tol", gc.tol, "Failure threshold");
  c_gc->add_option("--batch", gc.batch, "Entries in the checked minibatch");

  GroupArgs gr;
  auto* c_gr = app.add_subcommand("report-groups", "Grouped MAE differences between two reports");
  c_gr->add_option("--report", gr.report)->required()->check(CLI::ExistingFile);
  c_gr->add_option("--baseline", gr.baseline)->required()->check(CLI::ExistingFile);
  c_gr->add_option("--labels", gr.labels, "CSV component_id,category")->check(CLI::ExistingFile);
  c_gr->add_option("--data", gr.data, "Observation table for frequency groups")->check(CLI::ExistingFile);
  c_gr->add_option("--role", gr.role, "solute or solvent")->check(CLI::IsMember({"solute", "solvent"}));
  c_gr->add_option("--out", gr.out, "Output file (JSON lines)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_dg->parsed()) return cmd_datagen(dg, out);
    if (c_tr->parsed()) return cmd_train(tr, out);
    if (c_pr->parsed()) return cmd_predict(pr, out);
    if (c_cv->parsed()) return cmd_evaluate_cv(cv, out);
    if (c_gs->parsed()) return cmd_gridsearch(gs, out);
    if (c_gc->parsed()) return cmd_gradcheck(gc, out);
    if (c_gr->parsed()) return cmd_report_groups(gr, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DomainError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

} // namespace mcm::cli
