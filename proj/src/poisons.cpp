#include "unln/poisons.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "binio.hpp"
#include "chunk.hpp"
#include "unln/error.hpp"
#include "unln/rng.hpp"

namespace unln {

std::string NormConstraint::describe() const {
  switch (kind) {
    case NormKind::LInf: return "linf(" + std::to_string(epsilon) + ")";
    case NormKind::L2: return "l2(" + std::to_string(epsilon) + ")";
    case NormKind::Unbounded: return "unbounded";
  }
  return "?";
}

void PerturbationSet::validate() const {
  if (deltas.size() != static_cast<std::size_t>(count) * dim())
    throw ShapeError("perturbations: delta buffer size mismatch");
  if (mode == PerturbMode::ClassWise) {
    // No two class perturbations may coincide, otherwise they are not
    // separable per class.
    for (int a = 0; a < count; ++a)
      for (int b = a + 1; b < count; ++b)
        if (std::memcmp(delta(a), delta(b), sizeof(float) * dim()) == 0)
          throw ConfigError("perturbations: classes " + std::to_string(a) + " and " +
                            std::to_string(b) + " share an identical delta");
  }
  const float eps32 = static_cast<float>(constraint.epsilon);
  for (int i = 0; i < count; ++i) {
    const float* d = delta(i);
    if (constraint.kind == NormKind::LInf) {
      for (int j = 0; j < dim(); ++j)
        if (std::fabs(d[j]) > eps32)
          throw ConfigError("perturbations: |delta|_inf exceeds epsilon in delta " +
                            std::to_string(i));
    } else if (constraint.kind == NormKind::L2) {
      double nrm = 0.0;
      for (int j = 0; j < dim(); ++j) nrm += static_cast<double>(d[j]) * d[j];
      if (std::sqrt(nrm) > constraint.epsilon + 1e-6)
        throw ConfigError("perturbations: |delta|_2 exceeds epsilon in delta " +
                          std::to_string(i));
    }
  }
}

namespace {

bool any_duplicate(const PerturbationSet& p) {
  for (int a = 0; a < p.count; ++a)
    for (int b = a + 1; b < p.count; ++b)
      if (std::memcmp(p.delta(a), p.delta(b), sizeof(float) * p.dim()) == 0) return true;
  return false;
}

PerturbationSet gen_classwise_once(ClasswiseVariant variant, int k, ImageShape shape,
                                   double eps, int patches, std::uint64_t seed) {
  PerturbationSet p;
  p.mode = PerturbMode::ClassWise;
  p.channels = shape.channels;
  p.height = shape.height;
  p.width = shape.width;
  p.count = k;
  p.seed = seed;
  p.deltas.assign(static_cast<std::size_t>(k) * shape.dim(), 0.0f);
  const float pos = static_cast<float>(eps), neg = -static_cast<float>(eps);

  switch (variant) {
    case ClasswiseVariant::RandomNoise: {
      p.constraint = NormConstraint::linf(eps);
      p.provenance = "classwise-random-noise(eps=" + std::to_string(eps) + ")";
      for (int c = 0; c < k; ++c) {
        Rng rng(stage_seed(seed, "classwise-noise", static_cast<std::uint64_t>(c)));
        float* d = p.delta(c);
        for (int j = 0; j < shape.dim(); ++j) d[j] = rng.coin() ? pos : neg;
      }
      break;
    }
    case ClasswiseVariant::Regions: {
      const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(patches))));
      if (side * side != patches)
        throw ConfigError("gen_classwise: regions patch count must be a perfect square");
      if (shape.height % side != 0 || shape.width % side != 0)
        throw ConfigError("gen_classwise: sqrt(patches) must divide image height and width");
      if (shape.channels != 3)
        throw ConfigError("gen_classwise: regions variant expects 3 channels");
      const int ph = shape.height / side, pw = shape.width / side;
      p.constraint = NormConstraint::linf(eps);
      p.provenance = "classwise-regions-" + std::to_string(patches) +
                     "(eps=" + std::to_string(eps) + ")";
      for (int c = 0; c < k; ++c) {
        Rng rng(stage_seed(seed, "classwise-regions", static_cast<std::uint64_t>(c)));
        float* d = p.delta(c);
        for (int t = 0; t < patches; ++t) {
          float rgb[3];
          for (float& v : rgb) v = rng.coin() ? pos : neg;
          const int gy = t / side, gx = t % side;
          for (int ch = 0; ch < 3; ++ch)
            for (int y = gy * ph; y < (gy + 1) * ph; ++y)
              for (int x = gx * pw; x < (gx + 1) * pw; ++x)
                d[(ch * shape.height + y) * shape.width + x] = rgb[ch];
        }
      }
      break;
    }
    case ClasswiseVariant::OnePixel: {
      if (k > shape.height * shape.width)
        throw ConfigError("gen_classwise: more classes than pixels for one-pixel variant");
      p.constraint = NormConstraint::unbounded();
      p.provenance = "classwise-one-pixel";
      // Distinct pixel locations across classes.
      Rng rng(stage_seed(seed, "one-pixel"));
      std::set<int> used;
      for (int c = 0; c < k; ++c) {
        int pix;
        do {
          pix = static_cast<int>(rng.index(static_cast<std::size_t>(shape.height) * shape.width));
        } while (used.count(pix));
        used.insert(pix);
        // Drive every channel of the pixel to 0 or 1; apply_poison clips.
        const float v = rng.coin() ? 1.0f : -1.0f;
        float* d = p.delta(c);
        for (int ch = 0; ch < shape.channels; ++ch)
          d[ch * shape.height * shape.width + pix] = v;
      }
      break;
    }
  }
  return p;
}

}  // namespace

PerturbationSet gen_classwise(ClasswiseVariant variant, int k, ImageShape shape,
                              double eps, int patches, std::uint64_t seed) {
  if (k < 2) throw ConfigError("gen_classwise: need k >= 2");
  PerturbationSet p = gen_classwise_once(variant, k, shape, eps, patches, seed);
  while (any_duplicate(p))
    p = gen_classwise_once(variant, k, shape, eps, patches, ++seed);
  p.validate();
  return p;
}

PerturbationSet gen_samplewise_random(int n, ImageShape shape,
                                      NormConstraint constraint, std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen_samplewise_random: need n >= 1");
  if (constraint.kind == NormKind::Unbounded)
    throw ConfigError("gen_samplewise_random: constraint must be linf or l2");

  PerturbationSet p;
  p.mode = PerturbMode::SampleWise;
  p.channels = shape.channels;
  p.height = shape.height;
  p.width = shape.width;
  p.count = n;
  p.constraint = constraint;
  p.seed = seed;
  p.provenance = "samplewise-random(" + constraint.describe() + ")";
  p.deltas.assign(static_cast<std::size_t>(n) * shape.dim(), 0.0f);
  const int d = shape.dim();

#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    Rng rng(stage_seed(seed, "samplewise", static_cast<std::uint64_t>(i)));
    float* dst = p.delta(static_cast<int>(i));
    if (constraint.kind == NormKind::LInf) {
      const float pos = static_cast<float>(constraint.epsilon);
      for (int j = 0; j < d; ++j) dst[j] = rng.coin() ? pos : -pos;
    } else {
      std::vector<double> g(d);
      double nrm = 0.0;
      for (int j = 0; j < d; ++j) {
        g[j] = rng.normal();
        nrm += g[j] * g[j];
      }
      // Scale a hair under epsilon so the 32-bit cast cannot overshoot.
      const double scale = constraint.epsilon * (1.0 - 1e-9) / std::sqrt(nrm);
      for (int j = 0; j < d; ++j) dst[j] = static_cast<float>(g[j] * scale);
    }
  }
  p.validate();
  return p;
}

PerturbationSet gen_adversarial_poison(const ConvNet& surrogate, const ImageDataset& ds,
                                       double eps, int steps, double step_size,
                                       std::uint64_t seed) {
  if (ds.dim() != surrogate.input_dim() || ds.classes != surrogate.num_classes())
    throw ShapeError("gen_adversarial_poison: surrogate/dataset geometry mismatch");
  if (eps < 0.0 || steps < 0) throw ConfigError("gen_adversarial_poison: bad eps/steps");

  PerturbationSet p;
  p.mode = PerturbMode::SampleWise;
  p.channels = ds.channels;
  p.height = ds.height;
  p.width = ds.width;
  p.count = ds.n;
  p.constraint = NormConstraint::linf(eps);
  p.seed = seed;
  p.provenance = "adversarial-pgd(eps=" + std::to_string(eps) +
                 ",steps=" + std::to_string(steps) + ")";
  p.deltas.assign(static_cast<std::size_t>(ds.n) * ds.dim(), 0.0f);

  const int d = ds.dim();
  const int k = ds.classes;
  // Cast once so the stored float deltas respect the bound exactly.
  const double bound = static_cast<double>(static_cast<float>(eps));
  const auto plan = detail::chunk_plan(ds.n);

#pragma omp parallel for schedule(static)
  for (long c = 0; c < plan.count; ++c) {
    std::vector<double> x(d), xa(d), dx(d), delta(d, 0.0);
    for (long i = plan.begin(c); i < plan.end(c); ++i) {
      const float* src = ds.image(static_cast<int>(i));
      for (int j = 0; j < d; ++j) {
        x[j] = src[j];
        delta[j] = 0.0;
      }
      const int target = (ds.labels[i] + 1) % k;  // +1 cyclic shift
      for (int s = 0; s < steps; ++s) {
        for (int j = 0; j < d; ++j) xa[j] = x[j] + delta[j];
        surrogate.input_grad(xa.data(), &target, 1, dx.data());
        for (int j = 0; j < d; ++j) {
          // Descend the loss toward the target class.
          double v = delta[j] - step_size * (dx[j] > 0.0 ? 1.0 : (dx[j] < 0.0 ? -1.0 : 0.0));
          v = std::clamp(v, -bound, bound);
          v = std::clamp(x[j] + v, 0.0, 1.0) - x[j];
          delta[j] = v;
        }
      }
      float* out = p.delta(static_cast<int>(i));
      for (int j = 0; j < d; ++j) out[j] = static_cast<float>(delta[j]);
    }
  }
  return p;
}

ImageDataset apply_poison(const ImageDataset& ds, const PerturbationSet& perts) {
  if (perts.channels != ds.channels || perts.height != ds.height || perts.width != ds.width)
    throw ConfigError("apply_poison: perturbation shape does not match dataset");
  if (perts.mode == PerturbMode::ClassWise && perts.count != ds.classes)
    throw ConfigError("apply_poison: class-wise set has " + std::to_string(perts.count) +
                      " deltas for " + std::to_string(ds.classes) + " classes");
  if (perts.mode == PerturbMode::SampleWise && perts.count != ds.n)
    throw ConfigError("apply_poison: sample-wise set has " + std::to_string(perts.count) +
                      " deltas for " + std::to_string(ds.n) + " samples");

  ImageDataset out = ds;
  const int d = ds.dim();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < ds.n; ++i) {
    const float* dl =
        perts.delta(perts.mode == PerturbMode::ClassWise ? ds.labels[i] : static_cast<int>(i));
    float* img = out.image(static_cast<int>(i));
    for (int j = 0; j < d; ++j) img[j] = std::clamp(img[j] + dl[j], 0.0f, 1.0f);
  }
  out.provenance = ds.provenance + "+" + perts.provenance;
  return out;
}

PerturbationSet recover_perturbations(const ImageDataset& poisoned,
                                      const ImageDataset& clean) {
  if (poisoned.n != clean.n || poisoned.dim() != clean.dim())
    throw ShapeError("recover_perturbations: datasets differ in geometry");
  if (poisoned.labels != clean.labels)
    throw ConfigError("recover_perturbations: label sequences are misaligned");

  PerturbationSet p;
  p.mode = PerturbMode::SampleWise;
  p.channels = poisoned.channels;
  p.height = poisoned.height;
  p.width = poisoned.width;
  p.count = poisoned.n;
  p.constraint = NormConstraint::unbounded();
  p.provenance = "recovered(" + poisoned.provenance + ")";
  p.deltas.resize(poisoned.images.size());
  for (std::size_t i = 0; i < p.deltas.size(); ++i)
    p.deltas[i] = poisoned.images[i] - clean.images[i];
  return p;
}

// ---------------------------------------------------------------------------
// UNLN-PERT format v1:
//   magic "UNLN-PERT", u16 version, u8 mode, u8 norm kind, u32 count,
//   u32 c/h/w, f64 epsilon, u64 seed, provenance string, f32 delta blob.
// ---------------------------------------------------------------------------

namespace {
constexpr char kPertMagic[] = "UNLN-PERT";
constexpr std::uint16_t kPertVersion = 1;
}  // namespace

void save_perturbations(const PerturbationSet& p, const std::string& path) {
  detail::BinWriter w(path);
  w.raw(kPertMagic, 9);
  w.u16(kPertVersion);
  w.u8(p.mode == PerturbMode::ClassWise ? 0 : 1);
  w.u8(static_cast<std::uint8_t>(p.constraint.kind));
  w.u32(static_cast<std::uint32_t>(p.count));
  w.u32(static_cast<std::uint32_t>(p.channels));
  w.u32(static_cast<std::uint32_t>(p.height));
  w.u32(static_cast<std::uint32_t>(p.width));
  w.f64(p.constraint.epsilon);
  w.u64(p.seed);
  w.str(p.provenance);
  w.f32_block(p.deltas);
}

PerturbationSet load_perturbations(const std::string& path) {
  detail::BinReader r(path);
  r.magic(kPertMagic, 9);
  const std::uint16_t version = r.u16();
  if (version != kPertVersion)
    throw FormatError(path + ": unsupported UNLN-PERT version " + std::to_string(version));

  PerturbationSet p;
  p.mode = r.u8() == 0 ? PerturbMode::ClassWise : PerturbMode::SampleWise;
  const std::uint8_t kind = r.u8();
  if (kind > 2) throw FormatError(path + ": bad norm kind " + std::to_string(kind));
  p.constraint.kind = static_cast<NormKind>(kind);
  p.count = static_cast<int>(r.u32());
  p.channels = static_cast<int>(r.u32());
  p.height = static_cast<int>(r.u32());
  p.width = static_cast<int>(r.u32());
  p.constraint.epsilon = r.f64();
  p.seed = r.u64();
  p.provenance = r.str();

  const std::size_t expect = static_cast<std::size_t>(p.count) * p.dim() * 4;
  if (r.remaining() != expect)
    throw FormatError(path + ": header declares " + std::to_string(expect) +
                      " payload bytes but " + std::to_string(r.remaining()) +
                      " remain at offset " + std::to_string(r.offset()));
  p.deltas.resize(static_cast<std::size_t>(p.count) * p.dim());
  r.f32_block(p.deltas);
  return p;
}

}  // namespace unln
