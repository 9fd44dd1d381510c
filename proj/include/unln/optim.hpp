#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace unln {

enum class Schedule { Constant, StepDecay, Cosine };

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.0;       // in [0, 1)
  double weight_decay = 0.0;   // >= 0
  Schedule schedule = Schedule::Constant;
  std::vector<double> milestones;  // fractions in (0,1), strictly increasing
  double decay_factor = 10.0;      // lr divides by this at each milestone
  int epochs = 1;
  int batch_size = 1;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError on violated invariants
};

// Learning rate at a given epoch under the configured schedule.
double lr_at(const SgdConfig& cfg, int epoch);

struct SgdState {
  std::vector<double> velocity;  // sized lazily on first step
};

// One SGD update:
//   v <- momentum * v + g + weight_decay * p
//   p <- p - lr(epoch) * v
// Throws NumericalError on non-finite gradients; batch_index is only for the
// diagnostic message.
void sgd_step(std::vector<double>& params, const std::vector<double>& grads,
              SgdState& state, const SgdConfig& cfg, int epoch,
              long batch_index = -1);

struct LbfgsConfig {
  int steps = 500;
  double learning_rate = 0.5;
  int memory = 10;  // history pairs
};

// Differentiable scalar objective: returns f(x) and fills grad (same size as x).
using Objective =
    std::function<double(const std::vector<double>&, std::vector<double>&)>;

// L-BFGS with two-loop recursion and a fixed step size (no line search).
// A step that produces a non-finite objective value is halved, up to 20
// times, before giving up with NumericalError. Stops early once
// max|grad| <= 1e-10. Returns the final parameter vector.
std::vector<double> lbfgs_minimize(const Objective& objective,
                                   std::vector<double> init,
                                   const LbfgsConfig& cfg);

// Central-difference gradient check over sampled coordinates:
//   max over coords of |analytic - numeric| / max(1, |numeric|).
// tensor_ranges partitions the parameter vector into [begin, end) tensors;
// 50 coordinates are sampled per tensor (all of them if a tensor is smaller).
// An empty range list means one tensor covering everything.
double finite_difference_check(
    const Objective& objective, const std::vector<double>& params, double h,
    const std::vector<std::pair<std::size_t, std::size_t>>& tensor_ranges = {},
    std::uint64_t seed = 0x5eedULL);

}  // namespace unln
