#include "unln/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "unln/error.hpp"
#include "unln/probes.hpp"
#include "unln/rng.hpp"

namespace unln {

ConvNet make_victim(const ImageDataset& ds, const SgdConfig& cfg) {
  ConvNetArch arch;
  arch.in_channels = ds.channels;
  arch.height = ds.height;
  arch.width = ds.width;
  arch.classes = ds.classes;
  return ConvNet(arch, stage_seed(cfg.seed, "victim-init"));
}

SgdConfig desk_victim_config() {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.schedule = Schedule::Cosine;
  cfg.epochs = 30;
  cfg.batch_size = 128;
  return cfg;
}

SgdConfig ortho_proj_linear_config() {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.schedule = Schedule::StepDecay;
  cfg.milestones = {0.5, 0.75};
  cfg.decay_factor = 10.0;
  cfg.epochs = 20;
  cfg.batch_size = 128;
  return cfg;
}

SgdConfig adv_training_config() {
  SgdConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 5e-4;
  cfg.schedule = Schedule::StepDecay;
  cfg.milestones = {0.625, 0.75, 0.833};
  cfg.decay_factor = 10.0;
  cfg.epochs = 40;
  cfg.batch_size = 128;
  return cfg;
}

TrainedVictim standard_training(const ImageDataset& train, const ImageDataset* test,
                                const SgdConfig& cfg, bool save_checkpoints) {
  ConvNet victim = make_victim(train, cfg);
  TrainOptions opt;
  opt.test_set = test;
  opt.save_checkpoints = save_checkpoints;
  TrainResult result = train_classifier(victim, train, cfg, opt);
  return {std::move(victim), std::move(result)};
}

OrthoProjResult orthogonal_projection_attack(const ImageDataset& poisoned,
                                             const ImageDataset* test,
                                             const SgdConfig& lin_cfg,
                                             const SgdConfig& victim_cfg) {
  // Stage 1: logistic regression on raw poisoned pixels.
  LinearClassifier linear(poisoned.dim(), poisoned.classes);
  TrainOptions lin_opt;
  lin_opt.test_set = test;
  TrainResult lin_result = train_classifier(linear, poisoned, lin_cfg, lin_opt);

  // Stage 2: thin QR of W (the bias stays out; projecting out the all-ones
  // direction would darken every image globally).
  QrThin qr = qr_thin(linear.weight_matrix());

  // Stage 3: strip the learned subspace from every image row. The result is
  // intentionally not re-clipped: clipping would partially undo the
  // projection, and the dataset header carries a relaxed-range flag instead.
  Matrix x = to_matrix(poisoned);
  Matrix xr = project_out(qr.q, x);
  ImageDataset recovered = from_matrix(xr, poisoned, /*range_relaxed=*/true);
  recovered.provenance = poisoned.provenance + "+ortho-proj";

  // Stage 4: train the victim on recovered data.
  ConvNet victim = make_victim(recovered, victim_cfg);
  TrainOptions opt;
  opt.test_set = test;
  TrainResult victim_result = train_classifier(victim, recovered, victim_cfg, opt);

  return {std::move(recovered),      std::move(linear),
          std::move(qr.q),           std::move(qr.deficient_columns),
          std::move(victim),         std::move(lin_result.metrics),
          std::move(victim_result.metrics)};
}

AdvTrainResult adversarial_training(const ImageDataset& poisoned, const ImageDataset* test,
                                    const AdvTrainConfig& atk, const SgdConfig& cfg) {
  if (atk.epsilon < 0.0) throw ConfigError("adversarial_training: epsilon must be >= 0");
  if (atk.steps < 1) throw ConfigError("adversarial_training: steps must be >= 1");

  ConvNet victim = make_victim(poisoned, cfg);
  TrainOptions opt;
  opt.test_set = test;

  const int d = poisoned.dim();
  const double eps = atk.epsilon;
  const double step = atk.step_size > 0.0 ? atk.step_size : 2.0 * eps / atk.steps;
  const std::uint64_t root = cfg.seed;
  const ConvNet* model = &victim;

  if (eps > 0.0) {
    opt.batch_hook = [model, d, eps, step, root, steps = atk.steps](
                         double* x, const int* y, int n, int epoch, int batch) {
      std::vector<double> x0(x, x + static_cast<std::size_t>(n) * d);
      std::vector<double> dx(static_cast<std::size_t>(n) * d);
      Rng rng(stage_seed(root, "pgd", static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(batch)));
      for (long j = 0; j < static_cast<long>(n) * d; ++j)
        x[j] = std::clamp(x0[j] + rng.uniform(-eps, eps), 0.0, 1.0);
      for (int s = 0; s < steps; ++s) {
        model->input_grad(x, y, n, dx.data());
#pragma omp parallel for schedule(static)
        for (long j = 0; j < static_cast<long>(n) * d; ++j) {
          double v = x[j] + step * (dx[j] > 0.0 ? 1.0 : (dx[j] < 0.0 ? -1.0 : 0.0));
          v = std::clamp(v, x0[j] - eps, x0[j] + eps);
          x[j] = std::clamp(v, 0.0, 1.0);
        }
      }
    };
  }

  TrainResult result = train_classifier(victim, poisoned, cfg, opt);
  return {std::move(victim), std::move(result.metrics)};
}

ClassAvgSubResult class_average_subtraction(const ImageDataset& poisoned,
                                            const ImageDataset* test,
                                            const SgdConfig& cfg) {
  const std::vector<std::vector<float>> means = class_average_images(poisoned);

  ImageDataset adjusted = poisoned;
  adjusted.range_relaxed = true;  // subtraction is not clipped
  adjusted.provenance = poisoned.provenance + "+class-avg-sub";
  const int d = poisoned.dim();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < adjusted.n; ++i) {
    float* img = adjusted.image(static_cast<int>(i));
    const std::vector<float>& m = means[adjusted.labels[i]];
    for (int j = 0; j < d; ++j) img[j] -= m[j];
  }

  ConvNet victim = make_victim(adjusted, cfg);
  TrainOptions opt;
  opt.test_set = test;
  TrainResult result = train_classifier(victim, adjusted, cfg, opt);
  return {std::move(adjusted), std::move(victim), std::move(result.metrics)};
}

}  // namespace unln
