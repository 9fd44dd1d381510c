#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unln/data.hpp"
#include "unln/models.hpp"

namespace unln {

enum class PerturbMode { ClassWise, SampleWise };
enum class NormKind { LInf, L2, Unbounded };

struct NormConstraint {
  NormKind kind = NormKind::LInf;
  double epsilon = 8.0 / 255.0;

  static NormConstraint linf(double eps) { return {NormKind::LInf, eps}; }
  static NormConstraint l2(double eps) { return {NormKind::L2, eps}; }
  static NormConstraint unbounded() { return {NormKind::Unbounded, 0.0}; }
  std::string describe() const;
};

// A set of additive perturbations: one per class (class-wise) or one per
// sample (sample-wise), each of shape C x H x W.
struct PerturbationSet {
  PerturbMode mode = PerturbMode::ClassWise;
  int channels = 0, height = 0, width = 0;
  int count = 0;  // K (class-wise) or N (sample-wise)
  NormConstraint constraint;
  std::vector<float> deltas;  // count * C*H*W
  std::string provenance;
  std::uint64_t seed = 0;

  int dim() const { return channels * height * width; }
  const float* delta(int i) const { return deltas.data() + static_cast<std::size_t>(i) * dim(); }
  float* delta(int i) { return deltas.data() + static_cast<std::size_t>(i) * dim(); }

  // Checks class-wise distinctness and the declared norm bound (at 32-bit
  // resolution; L2 allows 1e-6 slack for the float cast).
  void validate() const;
};

enum class ClasswiseVariant { RandomNoise, Regions, OnePixel };

// Class-wise perturbation generators.
//  random-noise: fair Bernoulli per pixel element mapped {0,1} -> {-eps,+eps}.
//  regions-p:    p RGB triples from fair Bernoulli mapped to {-eps,+eps},
//                tiled over (H/sqrt(p)) x (W/sqrt(p)) patches in a grid.
//  one-pixel:    a distinct pixel per class driven to 0 or 1 on all channels
//                (unbounded constraint).
// Duplicate deltas (probability ~0) trigger regeneration with seed+1.
PerturbationSet gen_classwise(ClasswiseVariant variant, int k, ImageShape shape,
                              double eps, int patches, std::uint64_t seed);

// Sample-wise label-independent noise: Bernoulli +-eps (Linf) or Gaussian
// scaled to |delta|_2 = eps (L2).
PerturbationSet gen_samplewise_random(int n, ImageShape shape,
                                      NormConstraint constraint, std::uint64_t seed);

// Error-maximizing stand-in poison: targeted PGD toward (y+1) mod K against a
// surrogate trained on the clean data. x+delta stays in [0,1]; |delta|_inf <= eps.
PerturbationSet gen_adversarial_poison(const ConvNet& surrogate, const ImageDataset& ds,
                                       double eps, int steps, double step_size,
                                       std::uint64_t seed);

// x' = clip01(x + delta_i) with labels unchanged (clean-label poisoning).
ImageDataset apply_poison(const ImageDataset& ds, const PerturbationSet& perts);

// delta_i = x'_i - x_i, sample-wise. Labels must be aligned.
PerturbationSet recover_perturbations(const ImageDataset& poisoned,
                                      const ImageDataset& clean);

// UNLN-PERT binary format; round-trips bitwise.
void save_perturbations(const PerturbationSet& p, const std::string& path);
PerturbationSet load_perturbations(const std::string& path);

}  // namespace unln
