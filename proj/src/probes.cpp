#include "unln/probes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "unln/error.hpp"
#include "unln/models.hpp"

namespace unln {

ProbeResult separability_probe(ProbeTarget target, const ImageDataset& data,
                               const ImageDataset* clean, const LbfgsConfig& cfg) {
  const int d = data.dim();
  const int k = data.classes;

  Matrix x(data.n, d);
  if (target == ProbeTarget::Perturbations) {
    if (!clean)
      throw ConfigError("separability_probe: perturbations target needs the clean dataset");
    if (clean->n != data.n || clean->dim() != d)
      throw ShapeError("separability_probe: clean dataset geometry mismatch");
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] = static_cast<double>(data.images[i]) - clean->images[i];
    // Zero-one normalize with one global min/max so relative magnitudes
    // across classes survive.
    double lo = x.data[0], hi = x.data[0];
    for (double v : x.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      const double scale = 1.0 / (hi - lo);
      for (double& v : x.data) v = (v - lo) * scale;
    }
  } else {
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = data.images[i];
  }

  // Degenerate all-equal inputs carry no signal; report chance accuracy.
  {
    double lo = x.data[0], hi = x.data[0];
    for (double v : x.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi == lo) {
      std::fprintf(stderr,
                   "unln: warning: separability_probe: all-equal inputs, "
                   "returning majority-class accuracy\n");
      std::vector<int> counts(k, 0);
      for (auto l : data.labels) ++counts[l];
      ProbeResult r;
      r.degenerate = true;
      r.train_accuracy =
          static_cast<double>(*std::max_element(counts.begin(), counts.end())) / data.n;
      return r;
    }
  }

  LinearClassifier probe(d, k);
  probe.params() = lbfgs_minimize(logistic_objective(x, data.labels, k, 0.0),
                                  probe.params(), cfg);

  // Training accuracy of the fitted probe.
  std::vector<double> logits(static_cast<std::size_t>(data.n) * k);
  probe.forward(x.data.data(), data.n, logits.data());
  long correct = 0;
  for (int i = 0; i < data.n; ++i) {
    const double* li = logits.data() + static_cast<std::size_t>(i) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j)
      if (li[j] > li[arg]) arg = j;
    if (arg == data.labels[i]) ++correct;
  }

  ProbeResult r;
  r.train_accuracy = static_cast<double>(correct) / data.n;
  r.steps = cfg.steps;
  return r;
}

std::vector<std::vector<float>> class_average_images(const ImageDataset& ds) {
  const int d = ds.dim();
  std::vector<std::vector<double>> acc(ds.classes, std::vector<double>(d, 0.0));
  std::vector<long> counts(ds.classes, 0);
  for (int i = 0; i < ds.n; ++i) {
    const float* img = ds.image(i);
    auto& a = acc[ds.labels[i]];
    for (int j = 0; j < d; ++j) a[j] += img[j];
    ++counts[ds.labels[i]];
  }
  std::vector<std::vector<float>> out(ds.classes, std::vector<float>(d, 0.0f));
  for (int c = 0; c < ds.classes; ++c) {
    if (counts[c] == 0)
      throw ConfigError("class_average_images: class " + std::to_string(c) + " is empty");
    for (int j = 0; j < d; ++j)
      out[c][j] = static_cast<float>(acc[c][j] / counts[c]);
  }
  return out;
}

std::vector<std::string> export_weight_visualization(const Matrix& w,
                                                     const ImageShape& shape,
                                                     const std::string& prefix) {
  if (w.rows != static_cast<std::size_t>(shape.dim()))
    throw ShapeError("export_weight_visualization: weight rows " + std::to_string(w.rows) +
                     " != C*H*W = " + std::to_string(shape.dim()));
  if (shape.channels != 1 && shape.channels != 3)
    throw ShapeError("export_weight_visualization: need 1 or 3 channels");

  const int h = shape.height, ww = shape.width;
  const int plane = h * ww;
  std::vector<std::string> paths;

  for (std::size_t k = 0; k < w.cols; ++k) {
    double lo = w(0, k), hi = w(0, k);
    for (std::size_t j = 0; j < w.rows; ++j) {
      lo = std::min(lo, w(j, k));
      hi = std::max(hi, w(j, k));
    }
    std::vector<unsigned char> rgb(static_cast<std::size_t>(plane) * 3);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < ww; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          const int src_ch = shape.channels == 3 ? ch : 0;
          const double v = w((static_cast<std::size_t>(src_ch) * h + y) * ww + x, k);
          const int byte =
              hi > lo ? static_cast<int>(std::lround(255.0 * (v - lo) / (hi - lo))) : 128;
          rgb[(static_cast<std::size_t>(y) * ww + x) * 3 + ch] =
              static_cast<unsigned char>(std::clamp(byte, 0, 255));
        }
      }
    }
    const std::string path = prefix + "_class" + std::to_string(k) + ".ppm";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open for writing: " + path);
    f << "P6\n" << ww << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) throw FormatError("write failed: " + path);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace unln
