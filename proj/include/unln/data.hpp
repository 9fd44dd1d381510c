#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unln/matrix.hpp"

namespace unln {

struct ImageShape {
  int channels = 3;
  int height = 16;
  int width = 16;
  int dim() const { return channels * height * width; }
};

// Image classification dataset: N x C x H x W 32-bit pixels in [0,1] plus
// integer labels in [0, classes). Recovered datasets produced by the
// orthogonal projection attack may carry pixels outside [0,1]; those set
// range_relaxed.
struct ImageDataset {
  int n = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  int classes = 0;
  std::vector<float> images;        // n * channels*height*width, CHW per image
  std::vector<std::int32_t> labels;
  std::string split = "train";      // "train" or "test"
  std::uint64_t seed = 0;
  std::string provenance;
  bool range_relaxed = false;

  int dim() const { return channels * height * width; }
  ImageShape shape() const { return {channels, height, width}; }
  const float* image(int i) const { return images.data() + static_cast<std::size_t>(i) * dim(); }
  float* image(int i) { return images.data() + static_cast<std::size_t>(i) * dim(); }

  // Throws on violated invariants (sizes, label range, pixel range).
  void validate() const;
};

// Class-conditional procedural images: each class has a base hue triple and a
// geometric mask, rendered with per-sample position jitter, hue jitter and
// additive uniform pixel noise, then clipped to [0,1]. Deterministic in seed.
// Returns stratified 80/20 (train, test).
std::pair<ImageDataset, ImageDataset> generate_synthetic_clean(
    int k, int n_per_class, int h, int w, std::uint64_t seed);

// UNLN-DATA binary format. load(save(x)) is bitwise identical.
void save_dataset(const ImageDataset& ds, const std::string& path);
ImageDataset load_dataset(const std::string& path);

// Sampled without replacement via seeded Fisher-Yates. Preserves the class
// count. Throws ConfigError when count exceeds the dataset size.
ImageDataset subset_random(const ImageDataset& ds, std::size_t count, std::uint64_t seed);
ImageDataset subset_random_fraction(const ImageDataset& ds, double fraction, std::uint64_t seed);

// CIFAR-10 binary-version directory (data_batch_1..5.bin + test_batch.bin).
// Pixels are scaled by 1/255. Train N=50000, test N=10000, K=10.
std::pair<ImageDataset, ImageDataset> load_cifar10(const std::string& dir);

// Single CIFAR batch file (exactly records * 3073 bytes).
ImageDataset load_cifar_batch(const std::string& path, int records);

// Images flattened to an n x d matrix of doubles.
Matrix to_matrix(const ImageDataset& ds);

// Inverse of to_matrix for datasets whose geometry is given by `like`.
ImageDataset from_matrix(const Matrix& m, const ImageDataset& like, bool range_relaxed);

}  // namespace unln
