#pragma once

#include <string>
#include <vector>

#include "unln/data.hpp"
#include "unln/matrix.hpp"
#include "unln/optim.hpp"

namespace unln {

enum class ProbeTarget { Perturbations, Images };

struct ProbeResult {
  double train_accuracy = 0.0;
  int steps = 0;
  bool degenerate = false;  // all-equal inputs: chance accuracy returned
};

// Linear-separability probe: multinomial logistic regression (d x K weights
// plus bias) fit with L-BFGS on flattened inputs; returns the training
// accuracy. High accuracy means the inputs are (nearly) linearly separable.
//
// For the Perturbations target the inputs are poisoned - clean, min-max
// normalized to [0,1] with a single global min/max over the whole set.
// clean may be null for the Images target.
ProbeResult separability_probe(ProbeTarget target, const ImageDataset& data,
                               const ImageDataset* clean, const LbfgsConfig& cfg);

// Per-class pixel means. Throws ConfigError naming the first empty class.
std::vector<std::vector<float>> class_average_images(const ImageDataset& ds);

// Each column of w reshaped to C x H x W, min-max normalized per column to
// [0,255] (constant columns map to mid-gray 128), written as binary PPM (P6)
// files "<prefix>_class<k>.ppm". Returns the paths written.
std::vector<std::string> export_weight_visualization(const Matrix& w,
                                                     const ImageShape& shape,
                                                     const std::string& prefix);

}  // namespace unln
