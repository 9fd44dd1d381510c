#include "unln/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "binio.hpp"
#include "chunk.hpp"
#include "softmax.hpp"
#include "unln/error.hpp"
#include "unln/rng.hpp"

namespace unln {

SoftmaxLoss softmax_cross_entropy(const std::vector<double>& logits, int label) {
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw ShapeError("softmax_cross_entropy: label out of range");
  SoftmaxLoss out;
  out.grad_logits.resize(logits.size());
  out.loss = detail::softmax_ce(logits.data(), static_cast<int>(logits.size()), label,
                                out.grad_logits.data(), nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// LinearClassifier
// ---------------------------------------------------------------------------

LinearClassifier::LinearClassifier(int input_dim, int classes)
    : d_(input_dim), k_(classes) {
  if (input_dim < 1 || classes < 2)
    throw ConfigError("linear classifier: need input_dim >= 1 and classes >= 2");
  params_.assign(static_cast<std::size_t>(d_) * k_ + k_, 0.0);
}

std::string LinearClassifier::arch_descriptor() const {
  return "linear(d=" + std::to_string(d_) + ",k=" + std::to_string(k_) + ")";
}

std::vector<TensorSpec> LinearClassifier::tensor_specs() const {
  const auto d = static_cast<std::size_t>(d_), k = static_cast<std::size_t>(k_);
  return {{"weight", {d, k}, 0, d * k}, {"bias", {k}, d * k, k}};
}

void LinearClassifier::forward(const double* x, int n, double* logits) const {
  const double* w = params_.data();
  const double* b = params_.data() + static_cast<std::size_t>(d_) * k_;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    const double* xi = x + i * d_;
    double* li = logits + i * k_;
    std::copy(b, b + k_, li);
    for (int j = 0; j < d_; ++j) {
      const double v = xi[j];
      const double* wrow = w + static_cast<std::size_t>(j) * k_;
      for (int k = 0; k < k_; ++k) li[k] += v * wrow[k];
    }
  }
}

double LinearClassifier::loss_and_grad(const double* x, const int* y, int n,
                                       std::vector<double>& grad, double* dx,
                                       int* correct) const {
  const auto plan = detail::chunk_plan(n);
  const std::size_t psize = params_.size();
  const std::size_t wsize = static_cast<std::size_t>(d_) * k_;
  grad.assign(psize, 0.0);
  std::vector<double> chunk_grad(static_cast<std::size_t>(plan.count) * psize, 0.0);
  std::vector<double> chunk_loss(plan.count, 0.0);
  std::vector<int> chunk_correct(plan.count, 0);
  const double* w = params_.data();

#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    std::vector<double> logits(k_), dl(k_);
    double* g = chunk_grad.data() + static_cast<std::size_t>(c) * psize;
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      const double* xi = x + i * d_;
      forward(xi, 1, logits.data());
      int arg = 0;
      chunk_loss[c] += detail::softmax_ce(logits.data(), k_, y[i], dl.data(), &arg);
      if (arg == y[i]) ++chunk_correct[c];
      for (int k = 0; k < k_; ++k) g[wsize + k] += dl[k];
      for (int j = 0; j < d_; ++j) {
        const double v = xi[j];
        double* grow = g + static_cast<std::size_t>(j) * k_;
        for (int k = 0; k < k_; ++k) grow[k] += v * dl[k];
      }
      if (dx) {
        double* dxi = dx + i * d_;
        for (int j = 0; j < d_; ++j) {
          const double* wrow = w + static_cast<std::size_t>(j) * k_;
          double acc = 0.0;
          for (int k = 0; k < k_; ++k) acc += wrow[k] * dl[k];
          dxi[j] = acc;
        }
      }
    }
  }

  double loss = 0.0;
  int ncorrect = 0;
  for (long c = 0; c < plan.count; ++c) {
    loss += chunk_loss[c];
    ncorrect += chunk_correct[c];
    const double* g = chunk_grad.data() + static_cast<std::size_t>(c) * psize;
    for (std::size_t j = 0; j < psize; ++j) grad[j] += g[j];
  }
  const double scale = 1.0 / n;
  for (double& g : grad) g *= scale;
  if (dx)
    for (long i = 0; i < static_cast<long>(n) * d_; ++i) dx[i] *= scale;
  if (correct) *correct = ncorrect;
  return loss * scale;
}

void LinearClassifier::input_grad(const double* x, const int* y, int n, double* dx) const {
  const double* w = params_.data();
  const double scale = 1.0 / n;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    std::vector<double> logits(k_), dl(k_);
    forward(x + i * d_, 1, logits.data());
    detail::softmax_ce(logits.data(), k_, y[i], dl.data(), nullptr);
    double* dxi = dx + i * d_;
    for (int j = 0; j < d_; ++j) {
      const double* wrow = w + static_cast<std::size_t>(j) * k_;
      double acc = 0.0;
      for (int k = 0; k < k_; ++k) acc += wrow[k] * dl[k];
      dxi[j] = acc * scale;
    }
  }
}

Matrix LinearClassifier::weight_matrix() const {
  Matrix w(d_, k_);
  std::copy_n(params_.data(), static_cast<std::size_t>(d_) * k_, w.data.data());
  return w;
}

// ---------------------------------------------------------------------------
// Evaluation and training
// ---------------------------------------------------------------------------

EvalResult evaluate(const Classifier& model, const ImageDataset& ds) {
  if (ds.dim() != model.input_dim() || ds.classes != model.num_classes())
    throw ShapeError("evaluate: dataset does not match model geometry");
  const auto plan = detail::chunk_plan(ds.n);
  const int d = ds.dim(), k = model.num_classes();
  std::vector<double> chunk_loss(plan.count, 0.0);
  std::vector<int> chunk_correct(plan.count, 0);

#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    const long nb = plan.end(c) - plan.begin(c);
    std::vector<double> x(static_cast<std::size_t>(nb) * d);
    std::vector<double> logits(static_cast<std::size_t>(nb) * k);
    std::vector<double> dl(k);
    for (long i = 0; i < nb; ++i) {
      const float* src = ds.image(static_cast<int>(plan.begin(c) + i));
      for (int j = 0; j < d; ++j) x[i * d + j] = src[j];
    }
    model.forward(x.data(), static_cast<int>(nb), logits.data());
    for (long i = 0; i < nb; ++i) {
      int arg = 0;
      chunk_loss[c] += detail::softmax_ce(logits.data() + i * k, k,
                                          ds.labels[plan.begin(c) + i], dl.data(), &arg);
      if (arg == ds.labels[plan.begin(c) + i]) ++chunk_correct[c];
    }
  }

  EvalResult r;
  double loss = 0.0;
  int correct = 0;
  for (long c = 0; c < plan.count; ++c) {
    loss += chunk_loss[c];
    correct += chunk_correct[c];
  }
  r.accuracy = ds.n > 0 ? static_cast<double>(correct) / ds.n : 0.0;
  r.mean_loss = ds.n > 0 ? loss / ds.n : 0.0;
  return r;
}

TrainResult train_classifier(Classifier& model, const ImageDataset& train,
                             const SgdConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  if (train.n == 0) throw ConfigError("train_classifier: empty dataset");
  if (train.dim() != model.input_dim() || train.classes != model.num_classes())
    throw ShapeError("train_classifier: dataset does not match model geometry");

  TrainResult result;
  SgdState state;
  const int d = train.dim();
  const int bs = std::min(cfg.batch_size, train.n);
  std::vector<int> order(train.n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xbuf(static_cast<std::size_t>(bs) * d);
  std::vector<int> ybuf(bs);
  std::vector<double> grad;
  std::vector<double> last_good = model.params();

  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(stage_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    long epoch_correct = 0;
    const int batches = (train.n + bs - 1) / bs;

    for (int b = 0; b < batches; ++b) {
      const int lo = b * bs;
      const int nb = std::min(bs, train.n - lo);
      for (int i = 0; i < nb; ++i) {
        const float* src = train.image(order[lo + i]);
        for (int j = 0; j < d; ++j) xbuf[static_cast<std::size_t>(i) * d + j] = src[j];
        ybuf[i] = train.labels[order[lo + i]];
      }
      if (opt.batch_hook) opt.batch_hook(xbuf.data(), ybuf.data(), nb, epoch, b);

      int correct = 0;
      const double loss = model.loss_and_grad(xbuf.data(), ybuf.data(), nb, grad,
                                              nullptr, &correct);
      if (!std::isfinite(loss)) {
        model.params() = last_good;
        result.diverged = true;
        result.divergence_info = "non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(b);
        return result;
      }
      try {
        sgd_step(model.params(), grad, state, cfg, epoch, b);
      } catch (const NumericalError& e) {
        model.params() = last_good;
        result.diverged = true;
        result.divergence_info = e.what();
        return result;
      }
      epoch_loss += loss * nb;
      epoch_correct += correct;
    }

    MetricRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / train.n;
    rec.train_acc = static_cast<double>(epoch_correct) / train.n;
    rec.test_acc = nan;
    rec.test_loss = nan;
    if (opt.test_set) {
      const EvalResult ev = evaluate(model, *opt.test_set);
      rec.test_acc = ev.accuracy;
      rec.test_loss = ev.mean_loss;
    }
    result.metrics.push_back(rec);

    last_good = model.params();
    if (opt.save_checkpoints)
      result.checkpoints.snapshots.push_back({epoch, model.params()});
  }
  return result;
}

// ---------------------------------------------------------------------------
// UNLN-CKPT format v1:
//   magic "UNLN-CKPT", u16 version, architecture descriptor string,
//   u32 tensor count, per tensor (name string, u32 ndim, u64 dims...),
//   then the f64 parameter blob in tensor order. Little-endian throughout.
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[] = "UNLN-CKPT";
constexpr std::uint16_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const std::string& descriptor,
                     const std::vector<TensorSpec>& specs,
                     const std::vector<double>& params) {
  detail::BinWriter w(path);
  w.raw(kCkptMagic, 9);
  w.u16(kCkptVersion);
  w.str(descriptor);
  w.u32(static_cast<std::uint32_t>(specs.size()));
  for (const TensorSpec& t : specs) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t dim : t.shape) w.u64(dim);
  }
  w.f64_block(params);
}

void save_checkpoint(const std::string& path, const Classifier& model) {
  save_checkpoint(path, model.arch_descriptor(), model.tensor_specs(), model.params());
}

CheckpointData load_checkpoint(const std::string& path) {
  detail::BinReader r(path);
  r.magic(kCkptMagic, 9);
  const std::uint16_t version = r.u16();
  if (version != kCkptVersion)
    throw FormatError(path + ": unsupported UNLN-CKPT version " + std::to_string(version));

  CheckpointData out;
  out.descriptor = r.str();
  const std::uint32_t count = r.u32();
  std::size_t total = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorSpec t;
    t.name = r.str();
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError(path + ": tensor rank " + std::to_string(ndim) + " out of range");
    t.size = 1;
    for (std::uint32_t j = 0; j < ndim; ++j) {
      const std::uint64_t dim = r.u64();
      t.shape.push_back(static_cast<std::size_t>(dim));
      t.size *= static_cast<std::size_t>(dim);
    }
    t.offset = total;
    total += t.size;
    out.specs.push_back(std::move(t));
  }
  if (r.remaining() != total * sizeof(double))
    throw FormatError(path + ": parameter blob is " + std::to_string(r.remaining()) +
                      " bytes, shape table implies " + std::to_string(total * sizeof(double)) +
                      " at offset " + std::to_string(r.offset()));
  out.params.resize(total);
  r.f64_block(out.params);
  return out;
}

void load_checkpoint_into(const std::string& path, Classifier& model) {
  CheckpointData data = load_checkpoint(path);
  if (data.descriptor != model.arch_descriptor())
    throw FormatError(path + ": checkpoint architecture \"" + data.descriptor +
                      "\" does not match model \"" + model.arch_descriptor() + "\"");
  if (data.params.size() != model.params().size())
    throw FormatError(path + ": parameter count mismatch");
  model.params() = std::move(data.params);
}

// ---------------------------------------------------------------------------

Objective logistic_objective(const Matrix& x, const std::vector<std::int32_t>& y,
                             int classes, double l2) {
  if (x.rows != y.size())
    throw ShapeError("logistic_objective: row/label count mismatch");
  auto model = std::make_shared<LinearClassifier>(static_cast<int>(x.cols), classes);
  auto labels = std::make_shared<std::vector<int>>(y.begin(), y.end());
  const std::size_t wsize = x.cols * static_cast<std::size_t>(classes);
  const Matrix* xp = &x;  // caller keeps x alive for the objective's lifetime

  return [model, labels, xp, wsize, l2](const std::vector<double>& p,
                                        std::vector<double>& g) -> double {
    model->params() = p;
    double loss = model->loss_and_grad(xp->data.data(), labels->data(),
                                       static_cast<int>(xp->rows), g, nullptr, nullptr);
    if (l2 > 0.0) {
      double reg = 0.0;
      for (std::size_t j = 0; j < wsize; ++j) {
        reg += p[j] * p[j];
        g[j] += l2 * p[j];
      }
      loss += 0.5 * l2 * reg;
    }
    return loss;
  };
}

std::vector<std::pair<std::size_t, std::size_t>> tensor_ranges(const Classifier& model) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const TensorSpec& t : model.tensor_specs()) out.push_back({t.offset, t.offset + t.size});
  return out;
}

}  // namespace unln
