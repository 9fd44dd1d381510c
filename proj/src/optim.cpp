#include "unln/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <string>

#include "unln/error.hpp"
#include "unln/rng.hpp"

namespace unln {

void SgdConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("sgd: learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw ConfigError("sgd: weight_decay must be non-negative");
  if (epochs < 1) throw ConfigError("sgd: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("sgd: batch_size must be >= 1");
  if (schedule == Schedule::StepDecay) {
    if (decay_factor <= 0.0) throw ConfigError("sgd: decay_factor must be positive");
    double prev = 0.0;
    for (double m : milestones) {
      if (m <= prev || m >= 1.0)
        throw ConfigError("sgd: milestone fractions must be strictly increasing in (0,1)");
      prev = m;
    }
  }
}

double lr_at(const SgdConfig& cfg, int epoch) {
  switch (cfg.schedule) {
    case Schedule::Constant:
      return cfg.learning_rate;
    case Schedule::StepDecay: {
      double lr = cfg.learning_rate;
      for (double m : cfg.milestones) {
        const int at = static_cast<int>(m * cfg.epochs);
        if (epoch >= at) lr /= cfg.decay_factor;
      }
      return lr;
    }
    case Schedule::Cosine:
      return cfg.learning_rate * 0.5 *
             (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs));
  }
  return cfg.learning_rate;
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              SgdState& state, const SgdConfig& cfg, int epoch,
              long batch_index) {
  if (params.size() != grads.size())
    throw ShapeError("sgd_step: params/grads size mismatch");
  for (double g : grads) {
    if (!std::isfinite(g))
      throw NumericalError("sgd_step: non-finite gradient at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
  }
  if (state.velocity.size() != params.size())
    state.velocity.assign(params.size(), 0.0);

  const double lr = lr_at(cfg, epoch);
  const double m = cfg.momentum;
  const double wd = cfg.weight_decay;
  double* p = params.data();
  double* v = state.velocity.data();
  const double* g = grads.data();
  const long n = static_cast<long>(params.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    v[i] = m * v[i] + g[i] + wd * p[i];
    p[i] -= lr * v[i];
  }
}

namespace {

double max_abs_vec(const std::vector<double>& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::fabs(x));
  return r;
}

}  // namespace

std::vector<double> lbfgs_minimize(const Objective& objective,
                                   std::vector<double> init,
                                   const LbfgsConfig& cfg) {
  if (cfg.steps < 1) throw ConfigError("lbfgs: steps must be >= 1");
  if (cfg.memory < 1) throw ConfigError("lbfgs: memory must be >= 1");
  if (cfg.learning_rate <= 0.0) throw ConfigError("lbfgs: learning_rate must be positive");

  const std::size_t n = init.size();
  std::vector<double> x = std::move(init);
  std::vector<double> grad(n);
  double f = objective(x, grad);
  if (!std::isfinite(f))
    throw NumericalError("lbfgs: objective non-finite at initial point");

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;

  std::vector<double> dir(n), x_new(n), grad_new(n), alpha(cfg.memory);

  for (int step = 0; step < cfg.steps; ++step) {
    if (max_abs_vec(grad) <= 1e-10) break;

    // Two-loop recursion: dir = -H grad.
    dir = grad;
    const int hsize = static_cast<int>(history.size());
    for (int i = hsize - 1; i >= 0; --i) {
      const Pair& p = history[i];
      double a = 0.0;
      for (std::size_t j = 0; j < n; ++j) a += p.s[j] * dir[j];
      a *= p.rho;
      alpha[i] = a;
      for (std::size_t j = 0; j < n; ++j) dir[j] -= a * p.y[j];
    }
    if (hsize > 0) {
      // Scale by gamma = s.y / y.y of the most recent pair.
      const Pair& last = history.back();
      double sy = 0.0, yy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sy += last.s[j] * last.y[j];
        yy += last.y[j] * last.y[j];
      }
      const double gamma = sy / yy;
      for (std::size_t j = 0; j < n; ++j) dir[j] *= gamma;
    }
    for (int i = 0; i < hsize; ++i) {
      const Pair& p = history[i];
      double beta = 0.0;
      for (std::size_t j = 0; j < n; ++j) beta += p.y[j] * dir[j];
      beta *= p.rho;
      const double c = alpha[i] - beta;
      for (std::size_t j = 0; j < n; ++j) dir[j] += c * p.s[j];
    }

    // Fixed step, halved only while the objective comes back non-finite.
    double step_size = cfg.learning_rate;
    double f_new = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt <= 20; ++attempt) {
      for (std::size_t j = 0; j < n; ++j) x_new[j] = x[j] - step_size * dir[j];
      f_new = objective(x_new, grad_new);
      if (std::isfinite(f_new)) {
        ok = true;
        break;
      }
      step_size *= 0.5;
    }
    if (!ok)
      throw NumericalError("lbfgs: objective stayed non-finite after 20 halvings at step " +
                           std::to_string(step));

    Pair p;
    p.s.resize(n);
    p.y.resize(n);
    double sy = 0.0, ss = 0.0, yy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p.s[j] = x_new[j] - x[j];
      p.y[j] = grad_new[j] - grad[j];
      sy += p.s[j] * p.y[j];
      ss += p.s[j] * p.s[j];
      yy += p.y[j] * p.y[j];
    }
    // Keep the pair only when curvature is usable.
    if (sy > 1e-10 * std::sqrt(ss) * std::sqrt(yy)) {
      p.rho = 1.0 / sy;
      history.push_back(std::move(p));
      if (static_cast<int>(history.size()) > cfg.memory) history.pop_front();
    }

    x.swap(x_new);
    grad.swap(grad_new);
    f = f_new;
  }
  return x;
}

double finite_difference_check(
    const Objective& objective, const std::vector<double>& params, double h,
    const std::vector<std::pair<std::size_t, std::size_t>>& tensor_ranges,
    std::uint64_t seed) {
  if (h <= 0.0) throw ConfigError("finite_difference_check: h must be positive");

  std::vector<std::pair<std::size_t, std::size_t>> ranges = tensor_ranges;
  if (ranges.empty()) ranges.push_back({0, params.size()});

  std::vector<double> analytic(params.size());
  std::vector<double> work = params;
  objective(work, analytic);

  constexpr int kCoordsPerTensor = 50;
  Rng rng(seed);
  std::vector<double> scratch(params.size());
  double max_err = 0.0;

  for (const auto& [begin, end] : ranges) {
    const std::size_t len = end - begin;
    std::vector<std::size_t> coords;
    if (len <= kCoordsPerTensor) {
      for (std::size_t i = begin; i < end; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < kCoordsPerTensor; ++i) coords.push_back(begin + rng.index(len));
    }
    for (std::size_t c : coords) {
      const double saved = work[c];
      work[c] = saved + h;
      const double fp = objective(work, scratch);
      work[c] = saved - h;
      const double fm = objective(work, scratch);
      work[c] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double err =
          std::fabs(analytic[c] - numeric) / std::max(1.0, std::fabs(numeric));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace unln
