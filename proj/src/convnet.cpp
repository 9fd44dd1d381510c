#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "chunk.hpp"
#include "softmax.hpp"
#include "unln/error.hpp"
#include "unln/models.hpp"
#include "unln/rng.hpp"

namespace unln {

namespace {

// ---------------------------------------------------------------------------
// 3x3 zero-padded convolution kernels. All loops run the kernel taps in a
// fixed order per output element, so batch results do not depend on thread
// scheduling.
// ---------------------------------------------------------------------------

void conv3x3_forward(const double* in, int cin, int h, int w,
                     const double* weight, const double* bias, int cout,
                     double* out) {
  const int plane = h * w;
  for (int oc = 0; oc < cout; ++oc) {
    double* op = out + oc * plane;
    std::fill(op, op + plane, bias[oc]);
    for (int ic = 0; ic < cin; ++ic) {
      const double* ip = in + ic * plane;
      const double* wp = weight + (oc * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int ylo = std::max(0, -dy), yhi = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = wp[ky * 3 + kx];
          const int xlo = std::max(0, -dx), xhi = std::min(w, w - dx);
          for (int y = ylo; y < yhi; ++y) {
            const double* irow = ip + (y + dy) * w + dx;
            double* orow = op + y * w;
            for (int x = xlo; x < xhi; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// dweight/dbias accumulate (+=) so chunks can reuse one buffer.
void conv3x3_backward_weights(const double* in, int cin, int h, int w,
                              const double* dz, int cout, double* dweight,
                              double* dbias) {
  const int plane = h * w;
  for (int oc = 0; oc < cout; ++oc) {
    const double* dzp = dz + oc * plane;
    double bsum = 0.0;
    for (int i = 0; i < plane; ++i) bsum += dzp[i];
    dbias[oc] += bsum;
    for (int ic = 0; ic < cin; ++ic) {
      const double* ip = in + ic * plane;
      double* wp = dweight + (oc * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int ylo = std::max(0, -dy), yhi = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int xlo = std::max(0, -dx), xhi = std::min(w, w - dx);
          double acc = 0.0;
          for (int y = ylo; y < yhi; ++y) {
            const double* irow = ip + (y + dy) * w + dx;
            const double* dzrow = dzp + y * w;
            for (int x = xlo; x < xhi; ++x) acc += dzrow[x] * irow[x];
          }
          wp[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void conv3x3_backward_input(const double* weight, int cin, int h, int w,
                            const double* dz, int cout, double* din) {
  const int plane = h * w;
  std::fill(din, din + cin * plane, 0.0);
  for (int oc = 0; oc < cout; ++oc) {
    const double* dzp = dz + oc * plane;
    for (int ic = 0; ic < cin; ++ic) {
      double* ip = din + ic * plane;
      const double* wp = weight + (oc * cin + ic) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int ylo = std::max(0, -dy), yhi = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const double wv = wp[ky * 3 + kx];
          const int xlo = std::max(0, -dx), xhi = std::min(w, w - dx);
          for (int y = ylo; y < yhi; ++y) {
            double* irow = ip + (y + dy) * w + dx;
            const double* dzrow = dzp + y * w;
            for (int x = xlo; x < xhi; ++x) irow[x] += wv * dzrow[x];
          }
        }
      }
    }
  }
}

// ReLU followed by a 2x2/stride-2 max pool. idx records the flat offset of
// the winning element within the input plane layout (first maximum in scan
// order wins ties).
void relu_pool_forward(const double* z, int c, int h, int w, double* p, int* idx) {
  const int h2 = h / 2, w2 = w / 2;
  const int plane = h * w, plane2 = h2 * w2;
  for (int ch = 0; ch < c; ++ch) {
    const double* zp = z + ch * plane;
    double* pp = p + ch * plane2;
    int* xp = idx + ch * plane2;
    for (int y = 0; y < h2; ++y) {
      for (int x = 0; x < w2; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        int bi = 0;
        for (int sy = 0; sy < 2; ++sy) {
          for (int sx = 0; sx < 2; ++sx) {
            const int off = (2 * y + sy) * w + (2 * x + sx);
            const double v = std::max(0.0, zp[off]);
            if (v > best) {
              best = v;
              bi = off;
            }
          }
        }
        pp[y * w2 + x] = best;
        xp[y * w2 + x] = bi;
      }
    }
  }
}

// dz is zero-filled here; gradient flows only where the winner was positive.
void relu_pool_backward(const double* z, const double* dp, const int* idx,
                        int c, int h, int w, double* dz) {
  const int h2 = h / 2, w2 = w / 2;
  const int plane = h * w, plane2 = h2 * w2;
  std::fill(dz, dz + c * plane, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    const double* zp = z + ch * plane;
    const double* dpp = dp + ch * plane2;
    const int* xp = idx + ch * plane2;
    double* dzp = dz + ch * plane;
    for (int i = 0; i < plane2; ++i) {
      const int off = xp[i];
      if (zp[off] > 0.0) dzp[off] += dpp[i];
    }
  }
}

using detail::softmax_ce;

struct Workspace {
  std::vector<double> z1, p1, z2, p2;
  std::vector<int> i1, i2;
  std::vector<double> logits, dlogits, dp2, dz2, dp1, dz1;

  void resize(const ConvNetArch& a) {
    const int plane1 = a.height * a.width;
    const int plane2 = (a.height / 2) * (a.width / 2);
    const int plane3 = (a.height / 4) * (a.width / 4);
    z1.resize(static_cast<std::size_t>(a.conv1_channels) * plane1);
    p1.resize(static_cast<std::size_t>(a.conv1_channels) * plane2);
    i1.resize(p1.size());
    z2.resize(static_cast<std::size_t>(a.conv2_channels) * plane2);
    p2.resize(static_cast<std::size_t>(a.conv2_channels) * plane3);
    i2.resize(p2.size());
    logits.resize(a.classes);
    dlogits.resize(a.classes);
    dp2.resize(p2.size());
    dz2.resize(z2.size());
    dp1.resize(p1.size());
    dz1.resize(z1.size());
  }
};

}  // namespace

std::string ConvNetArch::descriptor() const {
  return "convnet2(c=" + std::to_string(in_channels) + ",h=" + std::to_string(height) +
         ",w=" + std::to_string(width) + ",k=" + std::to_string(classes) +
         ",c1=" + std::to_string(conv1_channels) + ",c2=" + std::to_string(conv2_channels) + ")";
}

ConvNet::ConvNet(const ConvNetArch& arch, std::uint64_t init_seed) : arch_(arch) {
  if (arch_.height % 4 != 0 || arch_.width % 4 != 0)
    throw ConfigError("convnet: height and width must be multiples of 4");
  const std::size_t n_w1 = static_cast<std::size_t>(arch_.conv1_channels) * arch_.in_channels * 9;
  const std::size_t n_w2 = static_cast<std::size_t>(arch_.conv2_channels) * arch_.conv1_channels * 9;
  const std::size_t n_wh = static_cast<std::size_t>(arch_.feature_dim()) * arch_.classes;
  w1_ = 0;
  b1_ = w1_ + n_w1;
  w2_ = b1_ + arch_.conv1_channels;
  b2_ = w2_ + n_w2;
  wh_ = b2_ + arch_.conv2_channels;
  bh_ = wh_ + n_wh;
  params_.assign(bh_ + arch_.classes, 0.0);

  Rng rng(init_seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(arch_.in_channels) * 9);
  const double s2 = 1.0 / std::sqrt(static_cast<double>(arch_.conv1_channels) * 9);
  const double sh = 1.0 / std::sqrt(static_cast<double>(arch_.feature_dim()));
  for (std::size_t i = 0; i < n_w1; ++i) params_[w1_ + i] = rng.uniform(-s1, s1);
  for (std::size_t i = 0; i < n_w2; ++i) params_[w2_ + i] = rng.uniform(-s2, s2);
  for (std::size_t i = 0; i < n_wh; ++i) params_[wh_ + i] = rng.uniform(-sh, sh);
}

int ConvNet::input_dim() const {
  return arch_.in_channels * arch_.height * arch_.width;
}

std::vector<TensorSpec> ConvNet::tensor_specs() const {
  const auto c1 = static_cast<std::size_t>(arch_.conv1_channels);
  const auto c2 = static_cast<std::size_t>(arch_.conv2_channels);
  const auto cin = static_cast<std::size_t>(arch_.in_channels);
  const auto feat = static_cast<std::size_t>(arch_.feature_dim());
  const auto k = static_cast<std::size_t>(arch_.classes);
  return {
      {"conv1.weight", {c1, cin, 3, 3}, w1_, c1 * cin * 9},
      {"conv1.bias", {c1}, b1_, c1},
      {"conv2.weight", {c2, c1, 3, 3}, w2_, c2 * c1 * 9},
      {"conv2.bias", {c2}, b2_, c2},
      {"head.weight", {feat, k}, wh_, feat * k},
      {"head.bias", {k}, bh_, k},
  };
}

namespace {

// Forward through the feature stack; leaves activations in ws.
void forward_sample(const ConvNetArch& a, const double* params, std::size_t w1,
                    std::size_t b1, std::size_t w2, std::size_t b2, const double* x,
                    Workspace& ws) {
  conv3x3_forward(x, a.in_channels, a.height, a.width, params + w1, params + b1,
                  a.conv1_channels, ws.z1.data());
  relu_pool_forward(ws.z1.data(), a.conv1_channels, a.height, a.width, ws.p1.data(),
                    ws.i1.data());
  conv3x3_forward(ws.p1.data(), a.conv1_channels, a.height / 2, a.width / 2, params + w2,
                  params + b2, a.conv2_channels, ws.z2.data());
  relu_pool_forward(ws.z2.data(), a.conv2_channels, a.height / 2, a.width / 2,
                    ws.p2.data(), ws.i2.data());
}

void head_forward(const ConvNetArch& a, const double* params, std::size_t wh,
                  std::size_t bh, const double* feat, double* logits) {
  const int k = a.classes;
  const int f = a.feature_dim();
  for (int j = 0; j < k; ++j) logits[j] = params[bh + j];
  for (int i = 0; i < f; ++i) {
    const double v = feat[i];
    const double* wrow = params + wh + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) logits[j] += v * wrow[j];
  }
}

}  // namespace

void ConvNet::forward(const double* x, int n, double* logits) const {
  const auto plan = detail::chunk_plan(n);
  const int d = input_dim();
  const int k = arch_.classes;
#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    Workspace ws;
    ws.resize(arch_);
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      forward_sample(arch_, params_.data(), w1_, b1_, w2_, b2_, x + i * d, ws);
      head_forward(arch_, params_.data(), wh_, bh_, ws.p2.data(), logits + i * k);
    }
  }
}

void ConvNet::features(const double* x, int n, double* feat) const {
  const auto plan = detail::chunk_plan(n);
  const int d = input_dim();
  const int f = arch_.feature_dim();
#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    Workspace ws;
    ws.resize(arch_);
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      forward_sample(arch_, params_.data(), w1_, b1_, w2_, b2_, x + i * d, ws);
      std::copy(ws.p2.begin(), ws.p2.end(), feat + i * f);
    }
  }
}

double ConvNet::loss_and_grad(const double* x, const int* y, int n,
                              std::vector<double>& grad, double* dx,
                              int* correct) const {
  const auto plan = detail::chunk_plan(n);
  const int d = input_dim();
  const int k = arch_.classes;
  const int f = arch_.feature_dim();
  const std::size_t psize = params_.size();

  grad.assign(psize, 0.0);
  std::vector<double> chunk_grad(static_cast<std::size_t>(plan.count) * psize, 0.0);
  std::vector<double> chunk_loss(plan.count, 0.0);
  std::vector<int> chunk_correct(plan.count, 0);

#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    Workspace ws;
    ws.resize(arch_);
    double* g = chunk_grad.data() + static_cast<std::size_t>(c) * psize;
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      const double* xi = x + i * d;
      forward_sample(arch_, params_.data(), w1_, b1_, w2_, b2_, xi, ws);
      head_forward(arch_, params_.data(), wh_, bh_, ws.p2.data(), ws.logits.data());

      int arg = 0;
      chunk_loss[c] += softmax_ce(ws.logits.data(), k, y[i], ws.dlogits.data(), &arg);
      if (arg == y[i]) ++chunk_correct[c];

      // Head.
      const double* dl = ws.dlogits.data();
      for (int j = 0; j < k; ++j) g[bh_ + j] += dl[j];
      for (int fi = 0; fi < f; ++fi) {
        const double v = ws.p2[fi];
        double* grow = g + wh_ + static_cast<std::size_t>(fi) * k;
        const double* wrow = params_.data() + wh_ + static_cast<std::size_t>(fi) * k;
        double acc = 0.0;
        for (int j = 0; j < k; ++j) {
          grow[j] += v * dl[j];
          acc += wrow[j] * dl[j];
        }
        ws.dp2[fi] = acc;
      }

      // Block 2.
      relu_pool_backward(ws.z2.data(), ws.dp2.data(), ws.i2.data(), arch_.conv2_channels,
                         arch_.height / 2, arch_.width / 2, ws.dz2.data());
      conv3x3_backward_weights(ws.p1.data(), arch_.conv1_channels, arch_.height / 2,
                               arch_.width / 2, ws.dz2.data(), arch_.conv2_channels,
                               g + w2_, g + b2_);
      conv3x3_backward_input(params_.data() + w2_, arch_.conv1_channels, arch_.height / 2,
                             arch_.width / 2, ws.dz2.data(), arch_.conv2_channels,
                             ws.dp1.data());

      // Block 1.
      relu_pool_backward(ws.z1.data(), ws.dp1.data(), ws.i1.data(), arch_.conv1_channels,
                         arch_.height, arch_.width, ws.dz1.data());
      conv3x3_backward_weights(xi, arch_.in_channels, arch_.height, arch_.width,
                               ws.dz1.data(), arch_.conv1_channels, g + w1_, g + b1_);
      if (dx)
        conv3x3_backward_input(params_.data() + w1_, arch_.in_channels, arch_.height,
                               arch_.width, ws.dz1.data(), arch_.conv1_channels,
                               dx + i * d);
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
    for (long i = 0; i < static_cast<long>(n) * d; ++i) dx[i] *= scale;
  if (correct) *correct = ncorrect;
  return loss * scale;
}

void ConvNet::input_grad(const double* x, const int* y, int n, double* dx) const {
  const auto plan = detail::chunk_plan(n);
  const int d = input_dim();
  const int k = arch_.classes;
  const int f = arch_.feature_dim();
  const double scale = 1.0 / n;

#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    Workspace ws;
    ws.resize(arch_);
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      const double* xi = x + i * d;
      forward_sample(arch_, params_.data(), w1_, b1_, w2_, b2_, xi, ws);
      head_forward(arch_, params_.data(), wh_, bh_, ws.p2.data(), ws.logits.data());
      softmax_ce(ws.logits.data(), k, y[i], ws.dlogits.data(), nullptr);

      const double* dl = ws.dlogits.data();
      for (int fi = 0; fi < f; ++fi) {
        const double* wrow = params_.data() + wh_ + static_cast<std::size_t>(fi) * k;
        double acc = 0.0;
        for (int j = 0; j < k; ++j) acc += wrow[j] * dl[j];
        ws.dp2[fi] = acc;
      }
      relu_pool_backward(ws.z2.data(), ws.dp2.data(), ws.i2.data(), arch_.conv2_channels,
                         arch_.height / 2, arch_.width / 2, ws.dz2.data());
      conv3x3_backward_input(params_.data() + w2_, arch_.conv1_channels, arch_.height / 2,
                             arch_.width / 2, ws.dz2.data(), arch_.conv2_channels,
                             ws.dp1.data());
      relu_pool_backward(ws.z1.data(), ws.dp1.data(), ws.i1.data(), arch_.conv1_channels,
                         arch_.height, arch_.width, ws.dz1.data());
      conv3x3_backward_input(params_.data() + w1_, arch_.in_channels, arch_.height,
                             arch_.width, ws.dz1.data(), arch_.conv1_channels, dx + i * d);
      for (int j = 0; j < d; ++j) dx[i * d + j] *= scale;
    }
  }
}

Matrix forward_features(const ConvNet& model, const ImageDataset& ds) {
  if (ds.dim() != model.input_dim())
    throw ShapeError("forward_features: dataset dim " + std::to_string(ds.dim()) +
                     " does not match model input dim " +
                     std::to_string(model.input_dim()));
  const int f = model.feature_dim();
  Matrix out(ds.n, f);
  const auto plan = detail::chunk_plan(ds.n);
  const int d = ds.dim();
#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    std::vector<double> buf(static_cast<std::size_t>(plan.end(c) - plan.begin(c)) * d);
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      const float* src = ds.image(static_cast<int>(i));
      for (int j = 0; j < d; ++j) buf[(i - plan.begin(c)) * d + j] = src[j];
    }
    model.features(buf.data(), static_cast<int>(plan.end(c) - plan.begin(c)),
                   out.row(plan.begin(c)));
  }
  return out;
}

}  // namespace unln
