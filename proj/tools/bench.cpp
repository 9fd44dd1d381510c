// Benchmark comparing the OpenMP kernels against the serial reference
// implementations (and 1-thread vs full-thread runs for the batched model
// kernels). Prints one row per kernel with timings and the max abs
// difference between the two paths.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "unln/attacks.hpp"
#include "unln/data.hpp"
#include "unln/linalg.hpp"
#include "unln/models.hpp"
#include "unln/rng.hpp"

using namespace unln;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Matrix m(r, c);
  Rng rng(seed);
  for (double& v : m.data) v = rng.uniform(-1.0, 1.0);
  return m;
}

double max_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    d = std::max(d, std::fabs(a.data[i] - b.data[i]));
  return d;
}

void row(const char* name, double serial_ms, double parallel_ms, double diff) {
  std::printf("%-28s %10.2f %12.2f %9.2fx %12.3e\n", name, serial_ms, parallel_ms,
              serial_ms / parallel_ms, diff);
}

}  // namespace

int main() {
  std::printf("threads: %d\n\n", omp_get_max_threads());
  std::printf("%-28s %10s %12s %9s %12s\n", "kernel", "serial ms", "parallel ms",
              "speedup", "max |diff|");

  {
    const Matrix a = random_matrix(512, 512, 1);
    const Matrix b = random_matrix(512, 512, 2);
    Matrix out_ref, out_par;
    const double ts = time_ms([&] { out_ref = ref::matmul(a, b); }, 3);
    const double tp = time_ms([&] { out_par = matmul(a, b); }, 3);
    row("matmul 512x512x512", ts, tp, max_diff(out_ref, out_par));
  }
  {
    const Matrix x = random_matrix(4800, 768, 3);
    Matrix w = random_matrix(768, 10, 4);
    const QrThin qr = qr_thin(w);
    Matrix out_ref, out_par;
    const double ts = time_ms([&] { out_ref = ref::project_out(qr.q, x); }, 3);
    const double tp = time_ms([&] { out_par = project_out(qr.q, x); }, 3);
    row("project_out 4800x768 k=10", ts, tp, max_diff(out_ref, out_par));
  }
  {
    // Batched convnet gradients: same kernel at 1 thread vs all threads.
    auto [train, test] = generate_synthetic_clean(10, 30, 16, 16, 7);
    ConvNet net(ConvNetArch{3, 16, 16, 10}, 11);
    const int n = 128;
    const int d = train.dim();
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      const float* src = train.image(i % train.n);
      for (int j = 0; j < d; ++j) x[static_cast<std::size_t>(i) * d + j] = src[j];
      y[i] = train.labels[i % train.n];
    }
    std::vector<double> g1, gN;
    const int max_threads = omp_get_max_threads();
    omp_set_num_threads(1);
    const double ts = time_ms([&] { net.loss_and_grad(x.data(), y.data(), n, g1, nullptr, nullptr); }, 5);
    omp_set_num_threads(max_threads);
    const double tp = time_ms([&] { net.loss_and_grad(x.data(), y.data(), n, gN, nullptr, nullptr); }, 5);
    double diff = 0.0;
    for (std::size_t i = 0; i < g1.size(); ++i) diff = std::max(diff, std::fabs(g1[i] - gN[i]));
    row("convnet grad batch=128", ts, tp, diff);
  }
  return 0;
}
