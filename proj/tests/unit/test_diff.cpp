#include "doctest.h"

#include "mcm/diff/grad_check.hpp"
#include "mcm/diff/tape.hpp"
#include "mcm/errors.hpp"

#include <cmath>
#include <functional>
#include <random>

using namespace mcm::diff;

namespace {

Matrix row(std::initializer_list<double> xs) {
  Matrix m(1, static_cast<Eigen::Index>(xs.size()));
  Eigen::Index k = 0;
  for (double x : xs) m(0, k++) = x;
  return m;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = u(rng);
  return m;
}

} // namespace

TEST_CASE("record evaluates primitives directly") {
  ParamStore store;
  store.add("u", row({1, 2}));
  store.add("v", row({3, 4}));
  Tape tape(&store);
  CHECK(dot(tape.param("u"), tape.param("v")).scalar() == 11.0);
  CHECK(softplus(tape.scalar(0.0)).scalar() == doctest::Approx(0.693147).epsilon(1e-6));
  CHECK(softplus(tape.scalar(800.0)).scalar() == 800.0);
  CHECK(softplus(tape.scalar(-800.0)).scalar() >= 0.0);
}

TEST_CASE("log and divide report domain errors with node id") {
  Tape tape;
  const Var zero = tape.scalar(0.0);
  const std::size_t before = tape.size();
  CHECK_THROWS_AS(log(zero), mcm::DomainError);
  CHECK(tape.size() == before);
  try {
    log(tape.constant(row({1.0, -2.0})));
    FAIL("expected DomainError");
  } catch (const mcm::DomainError& e) {
    CHECK(e.node() == static_cast<int>(tape.size()));
    CHECK(std::string(e.what()).find("entry 1") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.scalar(1.0) / zero, mcm::DomainError);
}

TEST_CASE("gradient of dot product is the other operand") {
  ParamStore store;
  store.add("u", row({1, 2}));
  store.add("v", row({3, 4}));
  Tape tape(&store);
  const Var out = dot(tape.param("u"), tape.param("v"));
  CHECK(tape.backward(out));
  CHECK(store.grad("u") == row({3, 4}));
  CHECK(store.grad("v") == row({1, 2}));
}

TEST_CASE("softplus derivative at zero matches central difference") {
  ParamStore store;
  store.add("x", Matrix::Zero(1, 1));
  Tape tape(&store);
  tape.backward(softplus(tape.param("x")));
  const double h = 1e-6;
  const double fd = (std::log1p(std::exp(h)) - std::log1p(std::exp(-h))) / (2 * h);
  CHECK(store.grad("x")(0, 0) == doctest::Approx(fd).epsilon(1e-8));
  CHECK(store.grad("x")(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("grad_check on a quadratic is exact up to roundoff") {
  ParamStore store;
  store.add("x", Matrix::Constant(1, 1, 3.0));
  const auto r = grad_check([](Tape& t) { return square(t.param("x")); }, store, {.step = 1e-6});
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.coords_checked == 1);
}

TEST_CASE("random two-layer MLP gradients agree with finite differences") {
  std::mt19937_64 rng(7);
  ParamStore store;
  store.add("w1", random_matrix(rng, 5, 8));
  store.add("b1", random_matrix(rng, 1, 8));
  store.add("w2", random_matrix(rng, 8, 3));
  store.add("b2", random_matrix(rng, 1, 3));
  const Matrix x = random_matrix(rng, 4, 5);
  auto f = [&](Tape& t) {
    const Var h = tanh(matmul(t.constant(x), t.param("w1")) + t.param("b1"));
    const Var y = matmul(h, t.param("w2")) + t.param("b2");
    return sum(square(y)) + sum(softplus(y));
  };
  const auto r = grad_check(f, store);
  CHECK(r.coords_checked == store.scalar_count());
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("every primitive passes grad_check at 100 random points") {
  std::mt19937_64 rng(11);
  const std::vector<int> idx = {2, 0, 2, 1};

  using Builder = std::function<Var(Tape&)>;
  struct Case {
    const char* name;
    Builder build;
  };
  // Positive inputs for log/div keep every point inside the domain.
  const std::vector<Case> cases = {
      {"add", [](Tape& t) { return sum(square(t.param("a") + t.param("b"))); }},
      {"add_row_broadcast", [](Tape& t) { return sum(square(t.param("a") + t.param("r"))); }},
      {"sub", [](Tape& t) { return sum(square(t.param("a") - t.param("b"))); }},
      {"mul", [](Tape& t) { return sum(t.param("a") * t.param("b")); }},
      {"mul_col_broadcast", [](Tape& t) { return sum(t.param("a") * t.param("c")); }},
      {"div", [](Tape& t) { return sum(t.param("a") / t.param("p")); }},
      {"neg_scale_shift", [](Tape& t) { return sum(square(2.5 * (-t.param("a")) + 0.3)); }},
      {"matmul", [](Tape& t) { return sum(square(matmul(t.param("a"), t.param("m")))); }},
      {"dot", [](Tape& t) { return dot(t.param("a"), t.param("b")); }},
      {"exp", [](Tape& t) { return sum(exp(t.param("a"))); }},
      {"log", [](Tape& t) { return sum(log(t.param("p"))); }},
      {"square", [](Tape& t) { return sum(square(t.param("a"))); }},
      {"softplus", [](Tape& t) { return sum(softplus(3.0 * t.param("a"))); }},
      {"tanh", [](Tape& t) { return sum(tanh(t.param("a"))); }},
      {"relu", [](Tape& t) { return sum(square(relu(t.param("a")))); }},
      {"row_sum", [](Tape& t) { return sum(square(row_sum(t.param("a")))); }},
      {"col_sum", [](Tape& t) { return sum(square(col_sum(t.param("a")))); }},
      {"gather", [&](Tape& t) { return sum(square(gather_rows(t.param("a"), idx))); }},
      {"scatter", [&](Tape& t) { return sum(square(scatter_add_rows(t.param("s"), idx, 5))); }},
      {"slice", [](Tape& t) { return sum(square(slice_cols(t.param("a"), 1, 2))); }},
  };

  for (const auto& c : cases) {
    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
      ParamStore store;
      store.add("a", random_matrix(rng, 3, 4));
      store.add("b", random_matrix(rng, 3, 4));
      store.add("r", random_matrix(rng, 1, 4));
      store.add("c", random_matrix(rng, 3, 1));
      store.add("p", random_matrix(rng, 3, 4, 0.5, 2.0));
      store.add("m", random_matrix(rng, 4, 2));
      store.add("s", random_matrix(rng, 4, 3));
      // Keep relu inputs away from the kink where central differences fail.
      for (Eigen::Index k = 0; k < store.value("a").size(); ++k) {
        double& v = store.value("a").data()[k];
        if (std::abs(v) < 1e-3) v = 0.5;
      }
      worst = std::max(worst, grad_check(c.build, store).max_rel_error);
    }
    INFO(c.name);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("gradients are linear in the recorded function") {
  std::mt19937_64 rng(3);
  ParamStore store;
  store.add("x", random_matrix(rng, 2, 3));
  auto f = [](Tape& t) { return sum(tanh(t.param("x"))); };
  auto g = [](Tape& t) { return sum(exp(t.param("x"))); };
  const double a = 1.7, b = -0.4;

  auto grad_of = [&](const std::function<Var(Tape&)>& fn) {
    store.zero_grad();
    Tape t(&store);
    t.backward(fn(t));
    return Matrix(store.grad("x"));
  };
  const Matrix gf = grad_of(f);
  const Matrix gg = grad_of(g);
  const Matrix gc = grad_of([&](Tape& t) { return a * f(t) + b * g(t); });
  CHECK((gc - (a * gf + b * gg)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("identical tapes give bit-identical values and gradients") {
  std::mt19937_64 rng(5);
  const Matrix w = random_matrix(rng, 4, 4);
  auto run = [&] {
    ParamStore store;
    store.add("w", w);
    Tape t(&store);
    const Var out = sum(softplus(matmul(t.param("w"), t.param("w"))));
    t.backward(out);
    return std::pair{out.scalar(), Matrix(store.grad("w"))};
  };
  const auto [v1, g1] = run();
  const auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("replay reproduces recorded values and tracks parameter updates") {
  std::mt19937_64 rng(9);
  ParamStore store;
  store.add("w", random_matrix(rng, 3, 3));
  Tape t(&store);
  const Var out = sum(tanh(matmul(t.param("w"), t.param("w"))) * 2.0);
  const double recorded = out.scalar();
  CHECK(t.replay(out)(0, 0) == recorded);
  store.value("w")(0, 0) += 0.1;
  CHECK(t.replay(out)(0, 0) != recorded);
  for (std::size_t id = 0; id < t.size(); ++id) {
    const auto& n = t.node(static_cast<int>(id));
    if (n.a >= 0) CHECK(n.a < static_cast<int>(id));
    if (n.b >= 0) CHECK(n.b < static_cast<int>(id));
  }
}

TEST_CASE("zeroing gradients is idempotent and preserves shape") {
  ParamStore store;
  store.add("x", Matrix::Ones(2, 5));
  {
    Tape t(&store);
    t.backward(sum(t.param("x")));
  }
  CHECK(store.grad("x").sum() == 10.0);
  store.zero_grad();
  store.zero_grad();
  CHECK(store.grad("x").rows() == 2);
  CHECK(store.grad("x").cols() == 5);
  CHECK(store.grad("x").sum() == 0.0);
}

TEST_CASE("backward flags non-finite gradients") {
  ParamStore store;
  store.add("x", Matrix::Constant(1, 1, 1000.0));
  Tape t(&store);
  CHECK_FALSE(t.backward(exp(square(t.param("x")))));
}

TEST_CASE("grad_check reports non-finite values with the parameter name") {
  ParamStore store;
  store.add("theta", Matrix::Constant(1, 1, 1000.0));
  try {
    grad_check([](Tape& t) { return exp(square(t.param("theta"))); }, store);
    FAIL("expected NumericError");
  } catch (const mcm::NumericError& e) {
    CHECK(std::string(e.what()).find("theta") != std::string::npos);
  }
}
