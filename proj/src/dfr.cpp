#include "unln/dfr.hpp"

#include <algorithm>
#include <cmath>

#include "softmax.hpp"
#include "unln/error.hpp"

namespace unln {

std::pair<std::vector<Matrix>, EmbeddingStats> extract_normalized_embeddings(
    const ConvNet& model, const ImageDataset& fit_set,
    const std::vector<const ImageDataset*>& apply_sets) {
  std::vector<Matrix> out;
  out.push_back(forward_features(model, fit_set));
  for (const ImageDataset* ds : apply_sets) out.push_back(forward_features(model, *ds));

  const std::size_t f = out[0].cols;
  const std::size_t n = out[0].rows;
  EmbeddingStats stats;
  stats.mean.assign(f, 0.0);
  stats.stdev.assign(f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = out[0].row(i);
    for (std::size_t j = 0; j < f; ++j) stats.mean[j] += row[j];
  }
  for (double& m : stats.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = out[0].row(i);
    for (std::size_t j = 0; j < f; ++j) {
      const double dv = row[j] - stats.mean[j];
      stats.stdev[j] += dv * dv;
    }
  }
  for (double& s : stats.stdev) s = std::sqrt(s / static_cast<double>(n));

  constexpr double kStdFloor = 1e-8;
  for (Matrix& m : out) {
    for (std::size_t i = 0; i < m.rows; ++i) {
      double* row = m.row(i);
      for (std::size_t j = 0; j < f; ++j)
        row[j] = (row[j] - stats.mean[j]) / std::max(stats.stdev[j], kStdFloor);
    }
  }
  return {std::move(out), std::move(stats)};
}

DfrResult dfr_retrain(const Matrix& fit_emb, const std::vector<std::int32_t>& fit_labels,
                      const Matrix& test_emb, const std::vector<std::int32_t>& test_labels,
                      int classes, const LbfgsConfig& cfg, double l2) {
  if (fit_emb.cols != test_emb.cols)
    throw ShapeError("dfr_retrain: embedding dimensions differ");

  LinearClassifier head(static_cast<int>(fit_emb.cols), classes);
  head.params() = lbfgs_minimize(logistic_objective(fit_emb, fit_labels, classes, l2),
                                 head.params(), cfg);

  const int k = classes;
  std::vector<double> logits(test_emb.rows * static_cast<std::size_t>(k));
  head.forward(test_emb.data.data(), static_cast<int>(test_emb.rows), logits.data());
  std::vector<double> grad(k);
  double loss = 0.0;
  long correct = 0;
  for (std::size_t i = 0; i < test_emb.rows; ++i) {
    int arg = 0;
    loss += detail::softmax_ce(logits.data() + i * k, k, test_labels[i], grad.data(), &arg);
    if (arg == test_labels[i]) ++correct;
  }

  DfrResult r{std::move(head), 0.0, 0.0};
  r.test_accuracy = static_cast<double>(correct) / static_cast<double>(test_emb.rows);
  r.test_loss = loss / static_cast<double>(test_emb.rows);
  return r;
}

DfrSweep dfr_sweep(const CheckpointSeries& checkpoints, const ConvNetArch& arch,
                   const ImageDataset& clean_subset, const ImageDataset& test,
                   const LbfgsConfig& cfg, double l2) {
  if (checkpoints.snapshots.empty())
    throw ConfigError("dfr_sweep: empty checkpoint series");

  DfrSweep sweep;
  ConvNet model(arch, 0);
  for (const Checkpoint& ck : checkpoints.snapshots) {
    if (ck.params.size() != model.params().size())
      throw FormatError("dfr_sweep: checkpoint at epoch " + std::to_string(ck.epoch) +
                        " has " + std::to_string(ck.params.size()) +
                        " parameters, architecture implies " +
                        std::to_string(model.params().size()));
    model.params() = ck.params;
    auto [embs, stats] = extract_normalized_embeddings(model, clean_subset, {&test});
    DfrResult r = dfr_retrain(embs[0], clean_subset.labels, embs[1], test.labels,
                              clean_subset.classes, cfg, l2);
    sweep.curve.push_back({ck.epoch, r.test_accuracy, r.test_loss});
  }

  sweep.max_accuracy = sweep.curve[0].accuracy;
  sweep.argmax_epoch = sweep.curve[0].epoch;
  sweep.min_loss = sweep.curve[0].loss;
  for (const DfrSweepPoint& p : sweep.curve) {
    if (p.accuracy > sweep.max_accuracy) {
      sweep.max_accuracy = p.accuracy;
      sweep.argmax_epoch = p.epoch;
    }
    sweep.min_loss = std::min(sweep.min_loss, p.loss);
  }
  return sweep;
}

}  // namespace unln
