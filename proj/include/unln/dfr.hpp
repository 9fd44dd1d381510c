#pragma once

#include <vector>

#include "unln/data.hpp"
#include "unln/models.hpp"

namespace unln {

struct EmbeddingStats {
  std::vector<double> mean;
  std::vector<double> stdev;
};

// Penultimate-layer embeddings, standardized per dimension. The statistics
// come from fit_set only; every apply set receives the same affine transform
// (the test set is never normalized with its own statistics). Constant
// dimensions map to zero through the 1e-8 std floor.
// Returns one matrix per input dataset, fit_set first.
std::pair<std::vector<Matrix>, EmbeddingStats> extract_normalized_embeddings(
    const ConvNet& model, const ImageDataset& fit_set,
    const std::vector<const ImageDataset*>& apply_sets = {});

struct DfrResult {
  LinearClassifier head;
  double test_accuracy = 0.0;
  double test_loss = 0.0;  // mean cross-entropy, no regularization term
};

// Retrains only the classification head: L2-regularized multinomial logistic
// regression on fixed embeddings, fit with L-BFGS.
DfrResult dfr_retrain(const Matrix& fit_emb, const std::vector<std::int32_t>& fit_labels,
                      const Matrix& test_emb, const std::vector<std::int32_t>& test_labels,
                      int classes, const LbfgsConfig& cfg = {500, 0.5, 10},
                      double l2 = 1e-3);

struct DfrSweepPoint {
  int epoch = 0;
  double accuracy = 0.0;
  double loss = 0.0;
};

struct DfrSweep {
  std::vector<DfrSweepPoint> curve;
  double max_accuracy = 0.0;
  int argmax_epoch = 0;
  double min_loss = 0.0;
};

// Runs extract + retrain for every checkpoint, in epoch order.
DfrSweep dfr_sweep(const CheckpointSeries& checkpoints, const ConvNetArch& arch,
                   const ImageDataset& clean_subset, const ImageDataset& test,
                   const LbfgsConfig& cfg = {500, 0.5, 10}, double l2 = 1e-3);

}  // namespace unln
