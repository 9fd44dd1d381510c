#pragma once

#include <cmath>

namespace unln::detail {

// Stable softmax cross-entropy for one sample. Writes the logit gradient
// (softmax - onehot) into grad, optionally reports the argmax (ties resolve
// to the lowest index), and returns the loss.
inline double softmax_ce(const double* logits, int k, int label, double* grad,
                         int* argmax) {
  double mx = logits[0];
  int arg = 0;
  for (int i = 1; i < k; ++i)
    if (logits[i] > mx) {
      mx = logits[i];
      arg = i;
    }
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    grad[i] = std::exp(logits[i] - mx);
    sum += grad[i];
  }
  const double loss = -(logits[label] - mx) + std::log(sum);
  for (int i = 0; i < k; ++i) grad[i] = grad[i] / sum - (i == label ? 1.0 : 0.0);
  if (argmax) *argmax = arg;
  return loss;
}

}  // namespace unln::detail
