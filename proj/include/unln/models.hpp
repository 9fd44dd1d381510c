#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "unln/data.hpp"
#include "unln/matrix.hpp"
#include "unln/optim.hpp"

namespace unln {

// Numerically stable softmax cross-entropy for one sample.
// loss = -log softmax(logits)[label]; grad = softmax(logits) - onehot(label).
struct SoftmaxLoss {
  double loss;
  std::vector<double> grad_logits;
};
SoftmaxLoss softmax_cross_entropy(const std::vector<double>& logits, int label);

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Common surface of the linear classifier and the convnet: a flat 64-bit
// parameter vector plus batched forward / forward-backward passes. Batches
// are row-major n x input_dim.
class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual int input_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual std::string arch_descriptor() const = 0;
  virtual std::vector<TensorSpec> tensor_specs() const = 0;

  virtual std::vector<double>& params() = 0;
  virtual const std::vector<double>& params() const = 0;

  // logits: n x num_classes.
  virtual void forward(const double* x, int n, double* logits) const = 0;

  // Mean cross-entropy over the batch. Fills grad (parameter gradient,
  // resized to params().size()). When dx is non-null it receives the
  // gradient w.r.t. the inputs (n x input_dim). When correct is non-null it
  // receives the number of argmax-correct samples.
  virtual double loss_and_grad(const double* x, const int* y, int n,
                               std::vector<double>& grad, double* dx = nullptr,
                               int* correct = nullptr) const = 0;

  // Gradient w.r.t. inputs only (cheaper than loss_and_grad for PGD loops).
  virtual void input_grad(const double* x, const int* y, int n, double* dx) const = 0;
};

// Multinomial logistic regression head: W is d x K (flattened d-major), plus
// a K bias. Zero-initialized (the objective is convex).
class LinearClassifier : public Classifier {
 public:
  LinearClassifier(int input_dim, int classes);

  int input_dim() const override { return d_; }
  int num_classes() const override { return k_; }
  std::string arch_descriptor() const override;
  std::vector<TensorSpec> tensor_specs() const override;
  std::vector<double>& params() override { return params_; }
  const std::vector<double>& params() const override { return params_; }

  void forward(const double* x, int n, double* logits) const override;
  double loss_and_grad(const double* x, const int* y, int n, std::vector<double>& grad,
                       double* dx, int* correct) const override;
  void input_grad(const double* x, const int* y, int n, double* dx) const override;

  // The weight matrix W (d x K) without the bias row.
  Matrix weight_matrix() const;
  double bias(int k) const { return params_[static_cast<std::size_t>(d_) * k_ + k]; }

 private:
  int d_, k_;
  std::vector<double> params_;  // d*K weights then K biases
};

struct ConvNetArch {
  int in_channels = 3;
  int height = 16;
  int width = 16;
  int classes = 10;
  int conv1_channels = 16;
  int conv2_channels = 32;

  int feature_dim() const { return conv2_channels * (height / 4) * (width / 4); }
  std::string descriptor() const;
};

// Small convnet: conv3x3(pad 1) -> ReLU -> maxpool2 -> conv3x3(pad 1) -> ReLU
// -> maxpool2 -> flatten -> affine head. Max-pool ties resolve to the first
// maximal element in scan order. Weights use fan-in-scaled uniform init,
// biases start at zero.
class ConvNet : public Classifier {
 public:
  ConvNet(const ConvNetArch& arch, std::uint64_t init_seed);

  const ConvNetArch& arch() const { return arch_; }
  int feature_dim() const { return arch_.feature_dim(); }

  int input_dim() const override;
  int num_classes() const override { return arch_.classes; }
  std::string arch_descriptor() const override { return arch_.descriptor(); }
  std::vector<TensorSpec> tensor_specs() const override;
  std::vector<double>& params() override { return params_; }
  const std::vector<double>& params() const override { return params_; }

  void forward(const double* x, int n, double* logits) const override;
  double loss_and_grad(const double* x, const int* y, int n, std::vector<double>& grad,
                       double* dx, int* correct) const override;
  void input_grad(const double* x, const int* y, int n, double* dx) const override;

  // Penultimate activations (post-flatten, pre-head): n x feature_dim.
  void features(const double* x, int n, double* feat) const;

 private:
  ConvNetArch arch_;
  std::vector<double> params_;

  // offsets into params_
  std::size_t w1_, b1_, w2_, b2_, wh_, bh_;
};

// Penultimate features of a dataset batch-by-batch; rows align with ds order.
Matrix forward_features(const ConvNet& model, const ImageDataset& ds);

struct MetricRecord {
  int epoch = 0;
  double train_acc = 0.0;
  double train_loss = 0.0;
  // NaN when no test set was supplied.
  double test_acc = 0.0;
  double test_loss = 0.0;
};

struct Checkpoint {
  int epoch = 0;
  std::vector<double> params;
};

struct CheckpointSeries {
  std::vector<Checkpoint> snapshots;  // epoch strictly increasing from 0
};

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Argmax accuracy (ties -> lowest class index) and mean cross-entropy.
EvalResult evaluate(const Classifier& model, const ImageDataset& ds);

struct TrainOptions {
  bool save_checkpoints = false;
  const ImageDataset* test_set = nullptr;
  // Invoked on each gathered batch before the gradient step; adversarial
  // training perturbs the batch in place here.
  std::function<void(double* x, const int* y, int n, int epoch, int batch)> batch_hook;
};

struct TrainResult {
  CheckpointSeries checkpoints;
  std::vector<MetricRecord> metrics;
  bool diverged = false;
  std::string divergence_info;
};

// Mini-batch SGD training. Shuffling is seeded from cfg.seed via the
// per-epoch stage seed, so two runs with identical inputs are bitwise equal.
// On a non-finite loss or gradient the loop stops, restores the parameters
// from the end of the last completed epoch, and flags the result.
TrainResult train_classifier(Classifier& model, const ImageDataset& train,
                             const SgdConfig& cfg, const TrainOptions& opt = {});

// UNLN-CKPT checkpoint files. save/load round-trips are bitwise identical.
struct CheckpointData {
  std::string descriptor;
  std::vector<TensorSpec> specs;
  std::vector<double> params;
};
void save_checkpoint(const std::string& path, const Classifier& model);
void save_checkpoint(const std::string& path, const std::string& descriptor,
                     const std::vector<TensorSpec>& specs,
                     const std::vector<double>& params);
CheckpointData load_checkpoint(const std::string& path);
// Throws FormatError when the stored descriptor or sizes do not match.
void load_checkpoint_into(const std::string& path, Classifier& model);

// Mean cross-entropy objective of a multinomial logistic regression on fixed
// inputs, in LinearClassifier parameter layout, plus 0.5*l2*|W|^2 on the
// weights (bias unregularized). Used by the separability probe and DFR.
Objective logistic_objective(const Matrix& x, const std::vector<std::int32_t>& y,
                             int classes, double l2 = 0.0);

// [begin,end) parameter ranges per tensor, for finite_difference_check.
std::vector<std::pair<std::size_t, std::size_t>> tensor_ranges(const Classifier& model);

}  // namespace unln
