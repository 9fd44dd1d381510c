#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "unln/attacks.hpp"
#include "unln/data.hpp"
#include "unln/error.hpp"
#include "unln/linalg.hpp"
#include "unln/poisons.hpp"
#include "unln/rng.hpp"

using namespace unln;

namespace {

// Brute-force numerical rank: Gaussian elimination with partial pivoting,
// counting pivots above tol * max|m|.
int rank_oracle(Matrix m, double rel_tol = 1e-9) {
  const double tol = rel_tol * std::max(1e-300, max_abs(m));
  int rank = 0;
  std::size_t row = 0;
  for (std::size_t col = 0; col < m.cols && row < m.rows; ++col) {
    std::size_t pivot = row;
    for (std::size_t i = row + 1; i < m.rows; ++i)
      if (std::fabs(m(i, col)) > std::fabs(m(pivot, col))) pivot = i;
    if (std::fabs(m(pivot, col)) <= tol) continue;
    for (std::size_t j = 0; j < m.cols; ++j) std::swap(m(row, j), m(pivot, j));
    for (std::size_t i = row + 1; i < m.rows; ++i) {
      const double f = m(i, col) / m(row, col);
      for (std::size_t j = col; j < m.cols; ++j) m(i, j) -= f * m(row, j);
    }
    ++rank;
    ++row;
  }
  return rank;
}

ImageDataset midgray_poisoned(int k, int n_per_class, int h, int w, std::uint64_t seed,
                              ImageDataset* clean_out = nullptr) {
  ImageDataset clean;
  clean.n = k * n_per_class;
  clean.channels = 3;
  clean.height = h;
  clean.width = w;
  clean.classes = k;
  clean.provenance = "midgray";
  clean.images.assign(static_cast<std::size_t>(clean.n) * clean.dim(), 0.5f);
  clean.labels.resize(clean.n);
  for (int i = 0; i < clean.n; ++i) clean.labels[i] = i % k;
  const PerturbationSet p =
      gen_classwise(ClasswiseVariant::RandomNoise, k, clean.shape(), 8.0 / 255, 0, seed);
  ImageDataset poisoned = apply_poison(clean, p);
  if (clean_out) *clean_out = std::move(clean);
  return poisoned;
}

SgdConfig tiny_cfg(int epochs, std::uint64_t seed) {
  SgdConfig cfg = desk_victim_config();
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("orthogonal projection: recovered rows are orthogonal to Q") {
  auto [train, test] = generate_synthetic_clean(4, 30, 8, 8, 5);
  const PerturbationSet p =
      gen_classwise(ClasswiseVariant::RandomNoise, 4, train.shape(), 8.0 / 255, 0, 6);
  const ImageDataset poisoned = apply_poison(train, p);

  SgdConfig lin = ortho_proj_linear_config();
  lin.epochs = 8;
  lin.seed = 3;
  const OrthoProjResult res =
      orthogonal_projection_attack(poisoned, nullptr, lin, tiny_cfg(2, 4));

  // 32-bit storage: residual within 1e-6.
  const Matrix xr = to_matrix(res.recovered);
  CHECK(max_abs(matmul(xr, res.q)) <= 1e-6);
  CHECK(res.recovered.range_relaxed);
  CHECK(res.q.cols == 4);
}

TEST_CASE("orthogonal projection: removes exactly K dimensions (rank oracle)") {
  Rng rng(31);
  Matrix x(30, 12);
  for (double& v : x.data) v = rng.uniform(-1, 1);
  Matrix w(12, 3);
  for (double& v : w.data) v = rng.uniform(-1, 1);
  const QrThin qr = qr_thin(w);
  const Matrix xr = project_out(qr.q, x);

  const int rank_before = rank_oracle(x);
  const int rank_after = rank_oracle(xr);
  REQUIRE(rank_before == 12);
  CHECK(rank_before - rank_after <= 3);
  CHECK(rank_after == 9);  // full-rank X loses exactly K dims
}

TEST_CASE("orthogonal projection: deterministic given fixed seeds") {
  ImageDataset clean;
  const ImageDataset poisoned = midgray_poisoned(3, 20, 8, 8, 7, &clean);
  SgdConfig lin = ortho_proj_linear_config();
  lin.epochs = 4;
  lin.seed = 11;
  const OrthoProjResult a = orthogonal_projection_attack(poisoned, nullptr, lin, tiny_cfg(2, 12));
  const OrthoProjResult b = orthogonal_projection_attack(poisoned, nullptr, lin, tiny_cfg(2, 12));
  CHECK(a.recovered.images == b.recovered.images);
  CHECK(a.victim.params() == b.victim.params());
}

TEST_CASE("adversarial training: epsilon 0 is bit-identical to standard training") {
  auto [train, test] = generate_synthetic_clean(4, 20, 8, 8, 21);
  const SgdConfig cfg = tiny_cfg(3, 77);

  const TrainedVictim std_run = standard_training(train, &test, cfg);
  const AdvTrainResult adv = adversarial_training(train, &test, {0.0, 3, -1.0}, cfg);

  CHECK(std_run.model.params() == adv.victim.params());
  REQUIRE(std_run.result.metrics.size() == adv.metrics.size());
  for (std::size_t i = 0; i < adv.metrics.size(); ++i) {
    CHECK(std_run.result.metrics[i].train_loss == adv.metrics[i].train_loss);
    CHECK(std_run.result.metrics[i].train_acc == adv.metrics[i].train_acc);
    CHECK(std_run.result.metrics[i].test_acc == adv.metrics[i].test_acc);
  }
}

TEST_CASE("adversarial training: perturbed batches stay legal and training proceeds") {
  auto [train, test] = generate_synthetic_clean(4, 20, 8, 8, 22);
  const AdvTrainResult adv =
      adversarial_training(train, &test, {8.0 / 255, 3, -1.0}, tiny_cfg(2, 5));
  REQUIRE(adv.metrics.size() == 2);
  for (const MetricRecord& m : adv.metrics) {
    CHECK(m.train_acc >= 0.0);
    CHECK(m.train_acc <= 1.0);
    CHECK(std::isfinite(m.train_loss));
  }
  CHECK_THROWS_AS(adversarial_training(train, nullptr, {-1.0, 3, -1.0}, tiny_cfg(1, 1)),
                  ConfigError);
  CHECK_THROWS_AS(adversarial_training(train, nullptr, {0.1, 0, -1.0}, tiny_cfg(1, 1)),
                  ConfigError);
}

TEST_CASE("class-average subtraction: adjusted train set has zero class means") {
  ImageDataset clean;
  const ImageDataset poisoned = midgray_poisoned(4, 15, 8, 8, 9, &clean);
  const ClassAvgSubResult res = class_average_subtraction(poisoned, nullptr, tiny_cfg(2, 6));

  CHECK(res.adjusted.range_relaxed);
  const int d = poisoned.dim();
  std::vector<std::vector<double>> sums(4, std::vector<double>(d, 0.0));
  std::vector<int> counts(4, 0);
  for (int i = 0; i < res.adjusted.n; ++i) {
    const float* img = res.adjusted.image(i);
    for (int j = 0; j < d; ++j) sums[res.adjusted.labels[i]][j] += img[j];
    ++counts[res.adjusted.labels[i]];
  }
  for (int c = 0; c < 4; ++c)
    for (int j = 0; j < d; j += 17)
      REQUIRE(std::fabs(sums[c][j] / counts[c]) <= 1e-5);
}
