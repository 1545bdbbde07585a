#include "mcm/eval/cv.hpp"

#include "mcm/errors.hpp"
#include "mcm/eval/predict.hpp"
#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

namespace mcm::eval {

using json = nlohmann::ordered_json;

namespace {

struct FoldOutput {
  std::vector<ReportEntry> entries;
  std::vector<trainer::LogRecord> logs;
};

std::vector<double> predict_entries(const trainer::TrainedModel& m, const trainer::ComponentInputs& inputs,
                                    const model::ObservationTable& data, const std::vector<int>& entries,
                                    bool prior_only) {
  const Matrix u = latent_means(m, true, inputs.solutes, prior_only);
  const Matrix v = latent_means(m, false, inputs.solvents, prior_only);
  std::vector<double> out;
  out.reserve(entries.size());
  for (int k : entries) {
    const auto& e = data.entries[static_cast<std::size_t>(k)];
    out.push_back(u.row(e.solute).dot(v.row(e.solvent)));
  }
  return out;
}

trainer::TrainedModel train_one(trainer::TrainConfig cfg, const model::ObservationTable& data, const Fold& fold,
                                const trainer::ComponentInputs& inputs, const std::string& run_id,
                                std::vector<trainer::LogRecord>& logs) {
  trainer::Trainer t(std::move(cfg), data, fold.train, inputs, run_id);
  if (t.config().mode == trainer::Mode::Mle) t.set_validation(fold.validation);
  t.train([&](const trainer::LogRecord& r) { logs.push_back(r); });
  return t.model();
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

} // namespace

std::uint64_t fold_seed(std::uint64_t seed, int fold) {
  return seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(fold + 1);
}

std::vector<SummaryRow> CvReport::summarize(const std::vector<ReportEntry>& entries, const std::string& main_method) {
  std::vector<std::string> methods{main_method};
  if (std::any_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return e.pred_prior.has_value(); })) {
    methods.push_back("prior");
  }
  if (std::any_of(entries.begin(), entries.end(), [](const ReportEntry& e) { return e.pred_mle.has_value(); })) {
    methods.push_back("mle");
  }
  std::vector<int> folds;
  for (const auto& e : entries)
    if (std::find(folds.begin(), folds.end(), e.fold) == folds.end()) folds.push_back(e.fold);
  std::sort(folds.begin(), folds.end());

  std::vector<SummaryRow> rows;
  for (const auto& method : methods) {
    auto pick = [&](const ReportEntry& e) -> std::optional<double> {
      if (method == main_method) return e.pred;
      return method == "prior" ? e.pred_prior : e.pred_mle;
    };
    auto add = [&](std::optional<int> fold) {
      for (auto split : {DomainTag::InDomain, DomainTag::OutOfDomain}) {
        std::vector<double> truth, pred;
        for (const auto& e : entries) {
          if (e.tag != split || (fold && e.fold != *fold)) continue;
          const auto p = pick(e);
          if (!p) continue;
          truth.push_back(e.truth);
          pred.push_back(*p);
        }
        SummaryRow r{method, fold, split, std::nullopt};
        if (!truth.empty()) r.metrics = metrics(truth, pred);
        rows.push_back(r);
      }
    };
    for (int f : folds) add(f);
    add(std::nullopt);
  }
  return rows;
}

void CvReport::write(std::ostream& out) const {
  for (const auto& e : entries) {
    json j;
    j["type"] = "entry";
    j["fold"] = e.fold;
    j["entry_index"] = e.entry_index;
    j["solute_id"] = e.solute_id;
    j["solvent_id"] = e.solvent_id;
    j["domain_tag"] = to_string(e.tag);
    j["ln_gamma_true"] = e.truth;
    j["ln_gamma_pred"] = e.pred;
    if (e.pred_prior) j["ln_gamma_pred_prior"] = *e.pred_prior;
    if (e.pred_mle) j["ln_gamma_pred_mle"] = *e.pred_mle;
    out << j.dump() << '\n';
  }
  for (const auto& s : summary) {
    json j;
    j["type"] = "summary";
    j["method"] = s.method;
    if (s.fold) j["fold"] = *s.fold;
    else j["fold"] = "all";
    j["split"] = s.split == DomainTag::InDomain ? "in" : "out";
    j["MAE"] = s.metrics ? json(s.metrics->mae) : json(nullptr);
    j["MSE"] = s.metrics ? json(s.metrics->mse) : json(nullptr);
    j["n"] = s.metrics ? s.metrics->n : 0;
    out << j.dump() << '\n';
  }
}

CvReport CvReport::read(std::istream& in) {
  CvReport r;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "entry") {
        ReportEntry e;
        e.fold = j.at("fold").get<int>();
        e.entry_index = j.at("entry_index").get<int>();
        e.solute_id = j.at("solute_id").get<std::string>();
        e.solvent_id = j.at("solvent_id").get<std::string>();
        e.tag = domain_tag_from(j.at("domain_tag").get<std::string>());
        e.truth = j.at("ln_gamma_true").get<double>();
        e.pred = j.at("ln_gamma_pred").get<double>();
        e.pred_prior = opt_number(j, "ln_gamma_pred_prior");
        e.pred_mle = opt_number(j, "ln_gamma_pred_mle");
        r.entries.push_back(std::move(e));
      } else if (type == "summary") {
        SummaryRow s;
        s.method = j.at("method").get<std::string>();
        if (j.at("fold").is_number()) s.fold = j["fold"].get<int>();
        s.split = j.at("split").get<std::string>() == "in" ? DomainTag::InDomain : DomainTag::OutOfDomain;
        if (!j.at("MAE").is_null()) s.metrics = Metrics{j["MAE"].get<double>(), j.at("MSE").get<double>(), j.at("n").get<std::size_t>()};
        r.summary.push_back(std::move(s));
      } else {
        throw ParseError("report: unknown record type '" + type + "'", lineno);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("report: ") + e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("report: ") + e.what(), lineno);
    }
  }
  return r;
}

CvReport CvReport::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path + "'");
  return read(in);
}

const SummaryRow* CvReport::find(const std::string& method, DomainTag split, std::optional<int> fold) const {
  for (const auto& s : summary)
    if (s.method == method && s.split == split && s.fold == fold) return &s;
  return nullptr;
}

CvResult evaluate_cv(const trainer::TrainConfig& cfg, const model::ObservationTable& data,
                     const mol::MoleculeLibrary& lib, const CvOptions& opts) {
  cfg.validate();
  data.validate();
  data.check_ids(lib);
  CvResult result;
  result.plan = make_splits(data, cfg.seed, cfg.split_by);

  std::vector<int> folds = opts.folds;
  if (folds.empty()) {
    for (int k = 0; k < kFolds; ++k) folds.push_back(k);
  }
  for (int k : folds)
    if (k < 0 || k >= kFolds) throw std::invalid_argument("evaluate_cv: fold out of range");

  std::vector<bool> excluded(data.size(), false);
  if (cfg.exclude_hp_test) {
    for (int k : result.plan.hyper.test) excluded[static_cast<std::size_t>(k)] = true;
  }

  const auto inputs = trainer::make_component_inputs(data, lib, cfg.prior);
  const bool with_mle = cfg.eval_mle && cfg.mode == trainer::Mode::Vem;

  std::vector<FoldOutput> outputs(folds.size());
  detail::parallel_for(folds.size(), opts.jobs, [&](std::size_t slot) {
    const int k = folds[slot];
    const Fold& fold = result.plan.folds[static_cast<std::size_t>(k)];
    FoldOutput& out = outputs[slot];
    auto run_cfg = cfg;
    run_cfg.seed = fold_seed(cfg.seed, k);
    const auto model = train_one(run_cfg, data, fold, inputs, "fold" + std::to_string(k), out.logs);

    std::vector<int> test;
    for (int e : fold.test)
      if (!excluded[static_cast<std::size_t>(e)]) test.push_back(e);
    const auto tags = tag_domain(data, fold.train, test);
    const auto pred = predict_entries(model, inputs, data, test, false);
    std::vector<double> prior;
    if (model.variational()) prior = predict_entries(model, inputs, data, test, true);
    std::vector<double> mle;
    if (with_mle) {
      auto mle_cfg = run_cfg;
      mle_cfg.mode = trainer::Mode::Mle;
      const auto mle_model = train_one(mle_cfg, data, fold, inputs, "fold" + std::to_string(k) + "-mle", out.logs);
      mle = predict_entries(mle_model, inputs, data, test, false);
    }
    for (std::size_t t = 0; t < test.size(); ++t) {
      const auto& e = data.entries[static_cast<std::size_t>(test[t])];
      ReportEntry r;
      r.fold = k;
      r.entry_index = test[t];
      r.solute_id = data.solute_ids[static_cast<std::size_t>(e.solute)];
      r.solvent_id = data.solvent_ids[static_cast<std::size_t>(e.solvent)];
      r.tag = tags[t];
      r.truth = e.ln_gamma;
      r.pred = pred[t];
      if (!prior.empty()) r.pred_prior = prior[t];
      if (!mle.empty()) r.pred_mle = mle[t];
      out.entries.push_back(std::move(r));
    }
  });

  for (auto& out : outputs) {
    result.report.entries.insert(result.report.entries.end(), out.entries.begin(), out.entries.end());
    result.logs.insert(result.logs.end(), out.logs.begin(), out.logs.end());
  }
  result.report.summary = CvReport::summarize(result.report.entries, trainer::to_string(cfg.mode));
  return result;
}

} // namespace mcm::eval
