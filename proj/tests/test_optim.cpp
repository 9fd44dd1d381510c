#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "unln/error.hpp"
#include "unln/optim.hpp"
#include "unln/rng.hpp"

using namespace unln;

TEST_CASE("sgd_step: plain gradient step") {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<double> p = {1.0}, g = {2.0};
  SgdState st;
  sgd_step(p, g, st, cfg, 0);
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("sgd_step: momentum recursion by hand") {
  // Two steps, momentum 0.9, constant g=1, lr=1, p0=0:
  //   v1=1, p1=-1; v2=1.9, p2=-2.9.
  SgdConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.momentum = 0.9;
  cfg.epochs = 2;
  std::vector<double> p = {0.0}, g = {1.0};
  SgdState st;
  sgd_step(p, g, st, cfg, 0);
  sgd_step(p, g, st, cfg, 0);
  CHECK(p[0] == doctest::Approx(-2.9).epsilon(1e-15));
}

TEST_CASE("sgd_step: nan gradient aborts with diagnostics") {
  SgdConfig cfg;
  std::vector<double> p = {1.0}, g = {std::nan("")};
  SgdState st;
  CHECK_THROWS_AS(sgd_step(p, g, st, cfg, 3, 7), NumericalError);
}

TEST_CASE("schedule: step decay hits 0.01 at the 0.5 milestone of 20 epochs") {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.schedule = Schedule::StepDecay;
  cfg.milestones = {0.5, 0.75};
  cfg.decay_factor = 10.0;
  cfg.epochs = 20;
  CHECK(lr_at(cfg, 0) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 9) == doctest::Approx(0.1));
  CHECK(lr_at(cfg, 10) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 14) == doctest::Approx(0.01));
  CHECK(lr_at(cfg, 15) == doctest::Approx(0.001));
  CHECK(lr_at(cfg, 19) == doctest::Approx(0.001));
}

TEST_CASE("schedule: piecewise constant with exactly len(milestones) drops") {
  SgdConfig cfg;
  cfg.schedule = Schedule::StepDecay;
  cfg.milestones = {0.25, 0.5, 0.75};
  cfg.epochs = 40;
  int drops = 0;
  for (int e = 1; e < cfg.epochs; ++e)
    if (lr_at(cfg, e) != lr_at(cfg, e - 1)) ++drops;
  CHECK(drops == 3);
}

TEST_CASE("schedule: cosine is monotone non-increasing") {
  SgdConfig cfg;
  cfg.schedule = Schedule::Cosine;
  cfg.epochs = 37;
  for (int e = 1; e < cfg.epochs; ++e) CHECK(lr_at(cfg, e) <= lr_at(cfg, e - 1));
  CHECK(lr_at(cfg, 0) == doctest::Approx(cfg.learning_rate));
}

TEST_CASE("sgd config invariants") {
  SgdConfig cfg;
  cfg.schedule = Schedule::StepDecay;
  cfg.milestones = {0.5, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.milestones = {0.5, 0.75};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("lbfgs: quadratic bowl from (3,4)") {
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {2 * x[0], 2 * x[1]};
    return x[0] * x[0] + x[1] * x[1];
  };
  LbfgsConfig cfg{50, 0.5, 10};
  const auto x = lbfgs_minimize(f, {3.0, 4.0}, cfg);
  CHECK(std::hypot(2 * x[0], 2 * x[1]) <= 1e-8);
}

TEST_CASE("lbfgs: closed-form quadratic solve") {
  // f(x) = 0.5 x^T A x - b^T x with A = diag(1,10), b = (1,1): x* = (1, 0.1).
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {x[0] - 1.0, 10.0 * x[1] - 1.0};
    return 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1]) - x[0] - x[1];
  };
  LbfgsConfig cfg{200, 0.5, 10};
  const auto x = lbfgs_minimize(f, {0.0, 0.0}, cfg);
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("lbfgs: convex quadratic reaches |grad| <= 1e-8 within dim+10 iterations") {
  // Full-memory L-BFGS with unit step on a well-conditioned quadratic.
  for (int dim : {2, 5, 10}) {
    Rng rng(100 + dim);
    std::vector<double> diag(dim), b(dim);
    for (int i = 0; i < dim; ++i) {
      diag[i] = 1.0 + 4.0 * rng.uniform();
      b[i] = rng.uniform(-1.0, 1.0);
    }
    auto f = [&](const std::vector<double>& x, std::vector<double>& g) {
      double val = 0.0;
      g.resize(dim);
      for (int i = 0; i < dim; ++i) {
        g[i] = diag[i] * x[i] - b[i];
        val += 0.5 * diag[i] * x[i] * x[i] - b[i] * x[i];
      }
      return val;
    };
    LbfgsConfig cfg{dim + 10, 1.0, dim};
    const auto x = lbfgs_minimize(f, std::vector<double>(dim, 2.0), cfg);
    double gmax = 0.0;
    for (int i = 0; i < dim; ++i) gmax = std::max(gmax, std::fabs(diag[i] * x[i] - b[i]));
    CHECK(gmax <= 1e-8);
  }
}

TEST_CASE("lbfgs: separable 2-point logistic regression reaches 100% train accuracy") {
  // Two 1-d points, labels 0/1. The grid-search oracle over w in [-5,5],
  // b in [-5,5] confirms 100% accuracy is attainable; L-BFGS must reach it.
  const double xs[2] = {-1.0, 1.0};
  const int ys[2] = {0, 1};
  auto acc_of = [&](double w, double b) {
    int correct = 0;
    for (int i = 0; i < 2; ++i) {
      const int pred = (w * xs[i] + b) > 0 ? 1 : 0;
      if (pred == ys[i]) ++correct;
    }
    return correct;
  };
  int best = 0;
  for (double w = -5; w <= 5; w += 0.5)
    for (double b = -5; b <= 5; b += 0.5) best = std::max(best, acc_of(w, b));
  REQUIRE(best == 2);  // oracle: separable

  // Binary logistic loss on (w, b).
  auto f = [&](const std::vector<double>& p, std::vector<double>& g) {
    double loss = 0.0;
    g = {0.0, 0.0};
    for (int i = 0; i < 2; ++i) {
      const double z = p[0] * xs[i] + p[1];
      const double t = ys[i] ? 1.0 : -1.0;
      loss += std::log1p(std::exp(-t * z));
      const double s = -t / (1.0 + std::exp(t * z));
      g[0] += s * xs[i];
      g[1] += s;
    }
    return loss;
  };
  LbfgsConfig cfg{500, 0.5, 10};
  const auto p = lbfgs_minimize(f, {0.0, 0.0}, cfg);
  CHECK(acc_of(p[0], p[1]) == 2);
}

TEST_CASE("lbfgs: non-finite at init throws") {
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {1.0};
    return std::numeric_limits<double>::infinity();
  };
  CHECK_THROWS_AS(lbfgs_minimize(f, {1.0}, LbfgsConfig{10, 0.5, 5}), NumericalError);
}

TEST_CASE("lbfgs: halves the step until the objective is finite again") {
  // f is NaN past x <= -2. From x=2 with lr=2 the first step lands at -2
  // (NaN), one halving lands at 0 (finite). steps=1 isolates that move.
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    if (x[0] <= -2.0) {
      g = {0.0};
      return std::numeric_limits<double>::quiet_NaN();
    }
    g = {2 * (x[0] - 1.0)};
    return (x[0] - 1.0) * (x[0] - 1.0);
  };
  LbfgsConfig cfg{1, 2.0, 5};
  const auto x = lbfgs_minimize(f, {2.0}, cfg);
  CHECK(x[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("finite_difference_check: exact on linear least squares") {
  // f(p) = 0.5 |A p - b|^2 with fixed A, b.
  Rng rng(7);
  const int n = 6, d = 4;
  std::vector<double> a(n * d), b(n);
  for (double& v : a) v = rng.uniform(-1, 1);
  for (double& v : b) v = rng.uniform(-1, 1);
  auto f = [&](const std::vector<double>& p, std::vector<double>& g) {
    g.assign(d, 0.0);
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
      double r = -b[i];
      for (int j = 0; j < d; ++j) r += a[i * d + j] * p[j];
      loss += 0.5 * r * r;
      for (int j = 0; j < d; ++j) g[j] += r * a[i * d + j];
    }
    return loss;
  };
  std::vector<double> p(d, 0.3);
  CHECK(finite_difference_check(f, p, 1e-5) <= 1e-7);
}

TEST_CASE("finite_difference_check: rejects h <= 0") {
  auto f = [](const std::vector<double>& x, std::vector<double>& g) {
    g = {1.0};
    return x[0];
  };
  CHECK_THROWS_AS(finite_difference_check(f, {0.0}, 0.0), ConfigError);
}
