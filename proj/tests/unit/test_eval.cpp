#include "doctest.h"

#include "mcm/datagen/datagen.hpp"
#include "mcm/errors.hpp"
#include "mcm/eval/cv.hpp"
#include "mcm/eval/groups.hpp"
#include "mcm/eval/predict.hpp"
#include "mcm/eval/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace mcm;
using namespace mcm::eval;

namespace {

datagen::PlantedWorld small_world(std::uint64_t seed, int m = 16, int n = 14, double density = 0.5) {
  datagen::WorldSpec s;
  s.solutes = m;
  s.solvents = n;
  s.density = density;
  s.max_heavy_atoms = 6;
  return datagen::generate(s, seed);
}

trainer::TrainConfig quick_config(priors::PriorKind prior = priors::PriorKind::Mofo) {
  trainer::TrainConfig c;
  c.prior = prior;
  c.latent_dim = 3;
  c.embedding_dim = 8;
  c.layers = 1;
  c.epochs = 5;
  c.lr = 0.01;
  c.batch_size = 32;
  c.seed = 17;
  c.log_every = 5;
  return c;
}

model::ObservationTable table_of(int m, int n, const std::vector<std::pair<int, int>>& pairs) {
  model::ObservationTable t;
  for (int i = 0; i < m; ++i) t.solute_ids.push_back("s" + std::to_string(i));
  for (int j = 0; j < n; ++j) t.solvent_ids.push_back("v" + std::to_string(j));
  for (const auto& [i, j] : pairs) t.entries.push_back({i, j, 0.1 * i - 0.2 * j});
  return t;
}

std::string dump(const CvReport& r) {
  std::ostringstream s;
  r.write(s);
  return s.str();
}

ReportEntry entry(int index, const std::string& solute, double truth, double pred) {
  ReportEntry e;
  e.entry_index = index;
  e.solute_id = solute;
  e.solvent_id = "v";
  e.truth = truth;
  e.pred = pred;
  return e;
}

} // namespace

TEST_CASE("metrics hand values") {
  const std::vector<double> t{1.0, 2.0};
  CHECK(metrics(t, t).mae == 0.0);
  CHECK(metrics(t, t).mse == 0.0);
  const std::vector<double> p{1.1, 1.9};
  CHECK(metrics(t, p).mae == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(metrics(t, p).mse == doctest::Approx(0.01).epsilon(1e-12));
  const std::vector<double> a{0.0}, b{0.3};
  CHECK(metrics(a, b).mae == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(metrics(a, b).mse == doctest::Approx(0.09).epsilon(1e-15));
  CHECK_THROWS_AS(metrics(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  CHECK_THROWS_AS(metrics(t, a), std::invalid_argument);
}

TEST_CASE("predictions are dot products and gamma is positive") {
  RowVector u(2), v(2);
  u << 1.0, 2.0;
  v << 0.5, -0.25;
  CHECK(predict_from_latents(u, v).ln_gamma == 0.0);
  CHECK(predict_from_latents(u, v).gamma == 1.0);
  const RowVector zero = RowVector::Zero(3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    RowVector w(3);
    w << n(rng), n(rng), n(rng);
    CHECK(predict_from_latents(zero, w).gamma == 1.0);
    CHECK(predict_from_latents(w, w.reverse()).gamma > 0.0);
  }
  CHECK_THROWS_AS(predict_from_latents(u, zero), std::invalid_argument);
}

TEST_CASE("split plans partition the data") {
  for (std::size_t n : {10u, 20u, 97u, 1000u}) {
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t k = 0; k < n; ++k) pairs.emplace_back(static_cast<int>(k % 13), static_cast<int>(k % 7));
    const auto data = table_of(13, 7, pairs);
    const auto plan = make_splits(data, 5);
    REQUIRE(plan.folds.size() == 10u);
    std::vector<int> test_count(n, 0);
    for (const auto& f : plan.folds) {
      std::vector<int> all;
      for (const auto* part : {&f.train, &f.validation, &f.test}) all.insert(all.end(), part->begin(), part->end());
      std::sort(all.begin(), all.end());
      std::vector<int> want(n);
      std::iota(want.begin(), want.end(), 0);
      CHECK(all == want);
      CHECK(std::abs(static_cast<double>(f.test.size()) - 0.1 * static_cast<double>(n)) <= 1.0);
      CHECK(std::abs(static_cast<double>(f.validation.size()) - 0.1 * static_cast<double>(n)) <= 1.0);
      CHECK(std::abs(static_cast<double>(f.train.size()) - 0.8 * static_cast<double>(n)) <= 1.0);
      for (int e : f.test) ++test_count[static_cast<std::size_t>(e)];
    }
    CHECK(std::all_of(test_count.begin(), test_count.end(), [](int c) { return c == 1; }));
    if (n == 20) {
      for (const auto& f : plan.folds) CHECK(f.test.size() == 2u);
    }

    std::vector<int> hp;
    for (const auto* part : {&plan.hyper.train, &plan.hyper.validation, &plan.hyper.test}) hp.insert(hp.end(), part->begin(), part->end());
    std::sort(hp.begin(), hp.end());
    CHECK(hp.size() == n);
    CHECK(std::adjacent_find(hp.begin(), hp.end()) == hp.end());

    const auto again = make_splits(data, 5);
    for (std::size_t k = 0; k < 10; ++k) CHECK(again.folds[k].test == plan.folds[k].test);
    CHECK(make_splits(data, 6).folds[0].test != plan.folds[0].test);
  }
  CHECK_THROWS_AS(make_splits(table_of(3, 3, {{0, 0}, {1, 1}}), 1), DataError);
}

TEST_CASE("component splits keep each solute in one test fold") {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 4; ++j) pairs.emplace_back(i, j);
  const auto data = table_of(25, 4, pairs);
  const auto plan = make_splits(data, 2, trainer::SplitBy::Component);
  std::vector<int> fold_of(25, -1);
  for (int k = 0; k < 10; ++k) {
    for (int e : plan.folds[static_cast<std::size_t>(k)].test) {
      const int s = data.entries[static_cast<std::size_t>(e)].solute;
      CHECK((fold_of[static_cast<std::size_t>(s)] == -1 || fold_of[static_cast<std::size_t>(s)] == k));
      fold_of[static_cast<std::size_t>(s)] = k;
    }
    const auto tags = tag_domain(data, plan.folds[static_cast<std::size_t>(k)].train, plan.folds[static_cast<std::size_t>(k)].test);
    CHECK(std::all_of(tags.begin(), tags.end(), [](DomainTag t) { return t == DomainTag::OutOfDomain; }));
  }
  CHECK(std::count(fold_of.begin(), fold_of.end(), -1) == 0);
}

TEST_CASE("domain tags follow the training set") {
  const auto data = table_of(3, 3, {{0, 0}, {1, 1}, {0, 1}, {2, 0}, {1, 0}});
  const std::vector<int> train{0, 1};
  const std::vector<int> test{2, 3, 4};
  const auto tags = tag_domain(data, train, test);
  CHECK(tags[0] == DomainTag::InDomain);
  CHECK(tags[1] == DomainTag::OutOfDomain);
  CHECK(tags[2] == DomainTag::InDomain);
  const std::vector<int> everything{0, 1, 2, 3, 4};
  const auto all = tag_domain(data, everything, everything);
  CHECK(std::all_of(all.begin(), all.end(), [](DomainTag t) { return t == DomainTag::InDomain; }));
}

TEST_CASE("latent means and the predictor cover all domain combinations") {
  const auto w = small_world(1);
  auto cfg = quick_config();
  const auto inputs = trainer::make_component_inputs(w.table, w.library, cfg.prior);
  std::vector<int> train;
  for (std::size_t k = 0; k < w.table.size(); ++k)
    if (w.table.entries[k].solute != 0 && w.table.entries[k].solvent != 0) train.push_back(static_cast<int>(k));
  trainer::Trainer t(cfg, w.table, train, inputs);
  t.train();
  const auto model = t.model();
  CHECK_FALSE(model.solute_seen[0]);
  CHECK(model.solute_seen[1]);

  const Matrix u = latent_means(model, true, inputs.solutes);
  const Matrix prior = latent_means(model, true, inputs.solutes, true);
  const auto state = model.state();
  CHECK(u.row(1) == state.u_mean.row(1));
  CHECK(u.row(0) == prior.row(0));
  CHECK(prior.row(1) != state.u_mean.row(1));

  Predictor p(model, &w.library);
  const auto in = p.predict(w.solute_ids[1], w.solvent_ids[1]);
  CHECK(in.solute.tag == DomainTag::InDomain);
  CHECK(in.solvent.tag == DomainTag::InDomain);
  CHECK(in.value.ln_gamma == state.u_mean.row(1).dot(state.v_mean.row(1)));

  const auto out = p.predict(w.solute_ids[0], w.solvent_ids[1]);
  CHECK(out.solute.tag == DomainTag::OutOfDomain);
  CHECK(out.solute.mean == prior.row(0));

  const auto smiles = p.predict("SMILES:CCO", w.solvent_ids[0]);
  CHECK(smiles.solute.tag == DomainTag::OutOfDomain);
  CHECK(smiles.solvent.tag == DomainTag::OutOfDomain);
  const auto ethanol = mol::make_molecule("e", mol::RecordKind::Smiles, "CCO");
  CHECK(smiles.solute.mean == model.structure_means(true, priors::make_input({&ethanol}, cfg.prior)).row(0));
  CHECK(p.predict("FORMULA:C2H6O", w.solvent_ids[1]).solute.tag == DomainTag::OutOfDomain);

  CHECK_THROWS_AS(p.predict("no-such-id", w.solvent_ids[1]), ParseError);
  CHECK_THROWS_AS(p.predict("SMILES:C1CC", w.solvent_ids[1]), ParseError);

  auto zeroed = model;
  zeroed.params.value("phi/u_mean").row(1).setZero();
  const auto z = Predictor(zeroed, &w.library).predict(w.solute_ids[1], w.solvent_ids[2]);
  CHECK(z.value.gamma == 1.0);

  auto mle_cfg = cfg;
  mle_cfg.mode = trainer::Mode::Mle;
  trainer::Trainer m(mle_cfg, w.table, train, inputs);
  m.train();
  const auto mle = m.model();
  CHECK(latent_means(mle, true, inputs.solutes) == mle.structure_means(true, inputs.solutes));
  CHECK(Predictor(mle, &w.library).latent(w.solute_ids[1], true).tag == DomainTag::InDomain);
}

TEST_CASE("cross-validation bookkeeping and determinism") {
  const auto w = small_world(2);
  auto cfg = quick_config();
  cfg.eval_mle = true;
  const auto a = evaluate_cv(cfg, w.table, w.library);
  CvOptions two;
  two.jobs = 2;
  const auto b = evaluate_cv(cfg, w.table, w.library, two);
  CHECK(dump(a.report) == dump(b.report));

  std::set<int> hp_test(a.plan.hyper.test.begin(), a.plan.hyper.test.end());
  std::size_t expected = 0;
  for (const auto& f : a.plan.folds)
    for (int e : f.test) expected += hp_test.count(e) ? 0 : 1;
  CHECK(a.report.entries.size() == expected);
  CHECK(expected < w.table.size());
  for (const auto& e : a.report.entries) {
    CHECK(hp_test.count(e.entry_index) == 0);
    CHECK(e.pred_prior.has_value());
    CHECK(e.pred_mle.has_value());
    const auto& f = a.plan.folds[static_cast<std::size_t>(e.fold)];
    const std::vector<int> one{e.entry_index};
    CHECK(tag_domain(w.table, f.train, one)[0] == e.tag);
  }

  for (auto split : {DomainTag::InDomain, DomainTag::OutOfDomain}) {
    const auto* pooled = a.report.find("vem", split);
    REQUIRE(pooled);
    if (!pooled->metrics) continue;
    double weighted = 0.0;
    std::size_t n = 0;
    for (int k = 0; k < 10; ++k) {
      const auto* f = a.report.find("vem", split, k);
      REQUIRE(f);
      if (!f->metrics) continue;
      weighted += f->metrics->mae * static_cast<double>(f->metrics->n);
      n += f->metrics->n;
    }
    CHECK(n == pooled->metrics->n);
    CHECK(weighted / static_cast<double>(n) == doctest::Approx(pooled->metrics->mae).epsilon(1e-12));
  }
  CHECK(a.report.find("prior", DomainTag::InDomain));
  CHECK(a.report.find("mle", DomainTag::OutOfDomain));
  CHECK(a.logs.size() == 20u);

  std::istringstream in(dump(a.report));
  const auto back = CvReport::read(in);
  CHECK(dump(back) == dump(a.report));

  cfg.exclude_hp_test = false;
  CvOptions first;
  first.folds = {0};
  const auto c = evaluate_cv(cfg, w.table, w.library, first);
  CHECK(c.report.entries.size() == c.plan.folds[0].test.size());

  std::istringstream bad("{\"type\":\"entry\",\"fold\":0}\n");
  CHECK_THROWS_AS(CvReport::read(bad), ParseError);
}

TEST_CASE("category grouping") {
  CvReport method, base;
  method.entries = {entry(0, "a", 0.0, 0.1), entry(1, "a", 0.0, -0.1), entry(2, "b", 1.0, 1.5), entry(3, "c", 1.0, 1.0)};
  base.entries = {entry(3, "c", 1.0, 0.0), entry(2, "b", 1.0, 1.0), entry(1, "a", 0.0, 0.3), entry(0, "a", 0.0, 0.3)};
  const std::map<std::string, std::string> labels{{"a", "alcohols"}, {"b", "alcohols"}};
  const auto rows = group_by_category(method, base, labels);
  REQUIRE(rows.size() == 2u);
  CHECK(rows[0].category == "UNLABELED");
  CHECK(rows[0].n == 1u);
  CHECK(rows[0].delta == doctest::Approx(1.0));
  CHECK(rows[1].category == "alcohols");
  CHECK(rows[1].n == 3u);
  CHECK(rows[1].mae_method == doctest::Approx(0.7 / 3.0));
  CHECK(rows[1].mae_baseline == doctest::Approx(0.6 / 3.0));
  CHECK(rows[1].small_sample);

  for (const auto& r : group_by_category(method, method, labels)) CHECK(r.delta == 0.0);
  const std::map<std::string, std::string> one{{"a", "x"}, {"b", "x"}, {"c", "x"}};
  const auto single = group_by_category(method, base, one);
  REQUIRE(single.size() == 1u);
  CHECK(single[0].n == 4u);

  CvReport big = method;
  for (int k = 4; k < 20; ++k) big.entries.push_back(entry(k, "a", 0.0, 0.0));
  const auto flagged = group_by_category(big, big, labels);
  CHECK_FALSE(flagged[1].small_sample);
  CHECK(flagged[0].small_sample);

  base.entries.pop_back();
  CHECK_THROWS_AS(group_by_category(method, base, labels), DataError);

  std::istringstream csv("component_id,category\na,alcohols\n b , ketones \n");
  const auto parsed = read_labels(csv);
  CHECK(parsed.at("b") == "ketones");
  std::istringstream dup("component_id,category\na,x\na,y\n");
  CHECK_THROWS_AS(read_labels(dup), ParseError);
}

TEST_CASE("frequency grouping") {
  const auto data = table_of(3, 2, {{0, 0}, {1, 0}, {1, 1}, {2, 0}, {2, 1}, {2, 1}});
  auto mk = [&](double err) {
    CvReport r;
    for (int k = 0; k < 6; ++k) {
      const auto& e = data.entries[static_cast<std::size_t>(k)];
      auto x = entry(k, data.solute_ids[static_cast<std::size_t>(e.solute)], e.ln_gamma, e.ln_gamma + err);
      x.solvent_id = data.solvent_ids[static_cast<std::size_t>(e.solvent)];
      r.entries.push_back(x);
    }
    return r;
  };
  const auto rows = group_by_frequency(mk(0.1), mk(0.3), data);
  REQUIRE(rows.size() == 3u);
  CHECK(rows[0].frequency == 1);
  CHECK(rows[0].n == 1u);
  CHECK(rows[1].frequency == 2);
  CHECK(rows[2].n == 3u);
  std::size_t total = 0;
  for (const auto& r : rows) {
    total += r.n;
    CHECK(r.delta == doctest::Approx(0.2));
  }
  CHECK(total == 6u);
  const auto by_solvent = group_by_frequency(mk(0.1), mk(0.3), data, Role::Solvent);
  REQUIRE(by_solvent.size() == 1u);
  CHECK(by_solvent[0].frequency == 3);
  CHECK(by_solvent[0].n == 6u);
}

TEST_CASE("random grid search") {
  const auto w = small_world(3, 20, 20, 0.5);
  auto base = quick_config();

  SearchSpace single;
  single.dims = {{"lr", {"0.01"}}};
  const auto one = random_grid_search(single, base, w.table, w.library, 30, 1, 9);
  REQUIRE(one.trials.size() == 30u);
  CHECK(std::count_if(one.trials.begin(), one.trials.end(), [](const Trial& t) { return t.duplicate_of.has_value(); }) == 29);
  REQUIRE(one.best.has_value());
  CHECK(*one.best == 0);
  CHECK(one.trials[29].mse == one.trials[0].mse);

  SearchSpace space;
  space.dims = {{"epochs", {"1", "400"}}, {"embedding_dim", {"8", "0"}}};
  const auto r = random_grid_search(space, base, w.table, w.library, 12, 4, 9);
  const auto again = random_grid_search(space, base, w.table, w.library, 12, 4, 9);
  for (std::size_t k = 0; k < r.trials.size(); ++k) {
    CHECK(r.trials[k].sampled == again.trials[k].sampled);
    CHECK(r.trials[k].mse == again.trials[k].mse);
  }
  bool failed = false;
  for (const auto& t : r.trials) {
    if (t.config.embedding_dim == 0) {
      CHECK_FALSE(t.ok);
      CHECK_FALSE(t.error.empty());
      failed = true;
    }
  }
  CHECK(failed);
  REQUIRE(r.best.has_value());
  CHECK(r.trials[static_cast<std::size_t>(*r.best)].config.epochs == 400);
  CHECK(r.trials[static_cast<std::size_t>(*r.best)].config.embedding_dim == 8);

  std::ostringstream out;
  r.write_trials(out);
  const std::string lines = out.str();
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 12);

  const auto parsed = SearchSpace::from_json(R"({"lr": [0.005, 0.001], "loss": ["kl", "entropy"], "bias": [true]})");
  CHECK(parsed.dims[0].second == std::vector<std::string>{"0.005", "0.001"});
  CHECK(parsed.dims[2].second == std::vector<std::string>{"true"});
  CHECK_NOTHROW(parsed.validate());
  CHECK_THROWS_AS(SearchSpace::from_json("[1,2]"), ParseError);
  SearchSpace empty_list;
  empty_list.dims = {{"lr", {}}};
  CHECK_THROWS_AS(empty_list.validate(), std::invalid_argument);
  for (auto prior : {priors::PriorKind::Gnn, priors::PriorKind::Mofo})
    for (auto mode : {trainer::Mode::Vem, trainer::Mode::Mle}) CHECK_NOTHROW(SearchSpace::defaults(prior, mode).validate());
}
