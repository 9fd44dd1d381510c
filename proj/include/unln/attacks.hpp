#pragma once

#include <cstdint>
#include <vector>

#include "unln/data.hpp"
#include "unln/linalg.hpp"
#include "unln/models.hpp"

namespace unln {

// Victim construction shared by standard training and every attack, so runs
// with the same config start from identical weights.
ConvNet make_victim(const ImageDataset& ds, const SgdConfig& cfg);

// Desk-scale defaults.
SgdConfig desk_victim_config();        // 30 epochs, batch 128, lr 0.1, mom 0.9,
                                       // wd 5e-4, cosine
SgdConfig ortho_proj_linear_config();  // 20 epochs, lr 0.1, step-decay x0.1 at
                                       // fractions {0.5, 0.75}, plain SGD
SgdConfig adv_training_config();       // 40 epochs, step-decay at
                                       // {0.625, 0.75, 0.833}

struct TrainedVictim {
  ConvNet model;
  TrainResult result;
};

// Standard ("no attack") victim training.
TrainedVictim standard_training(const ImageDataset& train, const ImageDataset* test,
                                const SgdConfig& cfg, bool save_checkpoints = false);

struct OrthoProjResult {
  ImageDataset recovered;  // projected train set; pixels may leave [0,1]
  LinearClassifier linear;
  Matrix q;
  std::vector<int> deficient_columns;
  ConvNet victim;
  std::vector<MetricRecord> linear_metrics;
  std::vector<MetricRecord> victim_metrics;
};

// Orthogonal projection: fit a logistic regression on poisoned pixels, QR the
// weight matrix (bias excluded), remove the span of Q from every image row
// (no re-clipping to [0,1]), then train the victim on the recovered data.
OrthoProjResult orthogonal_projection_attack(const ImageDataset& poisoned,
                                             const ImageDataset* test,
                                             const SgdConfig& lin_cfg,
                                             const SgdConfig& victim_cfg);

struct AdvTrainConfig {
  double epsilon = 8.0 / 255.0;
  int steps = 3;
  double step_size = -1.0;  // < 0 means 2*epsilon/steps
};

struct AdvTrainResult {
  ConvNet victim;
  std::vector<MetricRecord> metrics;
};

// PGD adversarial training: each batch is perturbed by an untargeted
// `steps`-step PGD adversary (random init inside the epsilon ball, iterates
// clamped to the ball and to [0,1]) before the SGD step. epsilon = 0 skips
// the adversary entirely and is bit-identical to standard_training.
AdvTrainResult adversarial_training(const ImageDataset& poisoned, const ImageDataset* test,
                                    const AdvTrainConfig& atk, const SgdConfig& cfg);

struct ClassAvgSubResult {
  ImageDataset adjusted;  // per-class mean removed, not clipped
  ConvNet victim;
  std::vector<MetricRecord> metrics;
};

// Negative baseline: subtract the per-class mean image from every training
// image (labels are unavailable at test time, so the test set is unchanged).
ClassAvgSubResult class_average_subtraction(const ImageDataset& poisoned,
                                            const ImageDataset* test,
                                            const SgdConfig& cfg);

}  // namespace unln
