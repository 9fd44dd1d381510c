#include "unln/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "binio.hpp"
#include "unln/error.hpp"
#include "unln/rng.hpp"

namespace unln {

void ImageDataset::validate() const {
  const std::size_t expect = static_cast<std::size_t>(n) * dim();
  if (images.size() != expect)
    throw ShapeError("dataset: image buffer has " + std::to_string(images.size()) +
                     " values, expected " + std::to_string(expect));
  if (labels.size() != static_cast<std::size_t>(n))
    throw ShapeError("dataset: label count mismatch");
  for (int i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= classes)
      throw FormatError("dataset: label " + std::to_string(labels[i]) +
                        " out of range at record " + std::to_string(i));
  if (!range_relaxed) {
    for (float v : images)
      if (!(v >= 0.0f && v <= 1.0f))
        throw FormatError("dataset: pixel " + std::to_string(v) + " outside [0,1]");
  } else {
    for (float v : images)
      if (!std::isfinite(v)) throw FormatError("dataset: non-finite pixel");
  }
}

namespace {

// ---------------------------------------------------------------------------
// Synthetic clean data
//
// Each class pairs one of 16 geometric masks with a base hue. Per-sample hue
// jitter makes neighbouring hues overlap, so color alone does not identify
// the class; per-sample position jitter (toroidal shift) makes the mask hard
// for a linear model but easy for a convnet with pooling.
// ---------------------------------------------------------------------------

constexpr int kMaxClasses = 16;
constexpr double kHueAmplitude = 0.30;   // base hue distance from mid-gray
constexpr double kHueJitter = 0.24;      // per-sample, per-channel
constexpr double kBackgroundLevel = 0.50;
constexpr double kBackgroundJitter = 0.06;  // per-sample scalar
constexpr double kPixelNoise = 0.15;        // spec'd amplitude
constexpr int kShiftRange = 3;              // jitter in [-3, 3]

bool mask_hit(int id, int x, int y, int w, int h) {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double dx = x - cx, dy = y - cy;
  const double r = std::sqrt(dx * dx + dy * dy);
  const int t = std::max(1, h / 8);
  switch (id) {
    case 0: return (y / 2) % 2 == 0;                       // horizontal stripes
    case 1: return (x / 2) % 2 == 0;                       // vertical stripes
    case 2: return ((x + y) / 2) % 2 == 0;                 // diagonal bands
    case 3: return ((x - y + 2 * w) / 2) % 2 == 0;         // anti-diagonal bands
    case 4: return r <= h * 0.32;                          // disc
    case 5: return r >= h * 0.22 && r <= h * 0.42;         // ring
    case 6: return ((x / 4) + (y / 4)) % 2 == 0;           // checkerboard
    case 7: return std::fabs(dx) <= t || std::fabs(dy) <= t;  // cross
    case 8: {                                              // square frame
      const double m = std::max(std::fabs(dx), std::fabs(dy));
      return m >= h * 0.22 && m <= h * 0.40;
    }
    case 9: return std::max(std::fabs(dx), std::fabs(dy)) <= h * 0.28;  // block
    case 10: return (y / 2) % 4 == 0;                      // sparse horizontal bars
    case 11: return std::fabs(std::fabs(dx) - std::fabs(dy)) <= t;  // X
    case 12: return y > x;                                 // lower triangle
    case 13: return x % 4 < 2 && y % 4 < 2;                // dot grid
    case 14: return (x / 2) % 4 == 0;                      // sparse vertical bars
    case 15: return std::fabs(dx) + std::fabs(dy) <= h * 0.40;  // diamond
  }
  return false;
}

void base_hue(int c, int k, double rgb[3]) {
  const double a = 2.0 * std::numbers::pi * c / k;
  rgb[0] = 0.5 + kHueAmplitude * std::cos(a);
  rgb[1] = 0.5 + kHueAmplitude * std::cos(a - 2.0 * std::numbers::pi / 3.0);
  rgb[2] = 0.5 + kHueAmplitude * std::cos(a + 2.0 * std::numbers::pi / 3.0);
}

void render_sample(int cls, int k, int h, int w, Rng& rng, float* out) {
  double hue[3];
  base_hue(cls, k, hue);
  double fg[3];
  for (int ch = 0; ch < 3; ++ch) fg[ch] = hue[ch] + rng.uniform(-kHueJitter, kHueJitter);
  const double bg = kBackgroundLevel + rng.uniform(-kBackgroundJitter, kBackgroundJitter);
  const int sx = static_cast<int>(rng.index(2 * kShiftRange + 1)) - kShiftRange;
  const int sy = static_cast<int>(rng.index(2 * kShiftRange + 1)) - kShiftRange;

  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int mx = ((x - sx) % w + w) % w;  // toroidal shift
        const int my = ((y - sy) % h + h) % h;
        double v = mask_hit(cls % kMaxClasses, mx, my, w, h) ? fg[ch] : bg;
        v += rng.uniform(-kPixelNoise, kPixelNoise);
        out[(ch * h + y) * w + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

}  // namespace

std::pair<ImageDataset, ImageDataset> generate_synthetic_clean(
    int k, int n_per_class, int h, int w, std::uint64_t seed) {
  if (k < 2) throw ConfigError("generate_synthetic_clean: need k >= 2");
  if (k > kMaxClasses)
    throw ConfigError("generate_synthetic_clean: only " + std::to_string(kMaxClasses) +
                      " mask/hue combinations available, requested " + std::to_string(k));
  if (n_per_class < 1) throw ConfigError("generate_synthetic_clean: need n_per_class >= 1");
  if (h % 4 != 0 || w % 4 != 0)
    throw ConfigError("generate_synthetic_clean: h and w must be multiples of 4");

  const int test_per_class = n_per_class / 5;  // 80/20 stratified
  const int train_per_class = n_per_class - test_per_class;
  const int chw = 3 * h * w;

  const std::string prov = "synthetic(k=" + std::to_string(k) + ",per_class=" +
                           std::to_string(n_per_class) + "," + std::to_string(h) + "x" +
                           std::to_string(w) + ",seed=" + std::to_string(seed) + ")";

  ImageDataset train, test;
  for (ImageDataset* ds : {&train, &test}) {
    ds->channels = 3;
    ds->height = h;
    ds->width = w;
    ds->classes = k;
    ds->seed = seed;
    ds->provenance = prov;
  }
  train.n = train_per_class * k;
  test.n = test_per_class * k;
  train.split = "train";
  test.split = "test";
  train.images.resize(static_cast<std::size_t>(train.n) * chw);
  test.images.resize(static_cast<std::size_t>(test.n) * chw);
  train.labels.resize(train.n);
  test.labels.resize(test.n);

  // Interleave classes so label order carries no structure.
#pragma omp parallel for schedule(static) collapse(2)
  for (long c = 0; c < k; ++c) {
    for (long i = 0; i < n_per_class; ++i) {
      Rng rng(stage_seed(seed, "synthetic-sample", static_cast<std::uint64_t>(c),
                         static_cast<std::uint64_t>(i)));
      float* dst;
      if (i < train_per_class) {
        const long row = i * k + c;
        train.labels[row] = static_cast<std::int32_t>(c);
        dst = train.image(static_cast<int>(row));
      } else {
        const long row = (i - train_per_class) * k + c;
        test.labels[row] = static_cast<std::int32_t>(c);
        dst = test.image(static_cast<int>(row));
      }
      render_sample(static_cast<int>(c), k, h, w, rng, dst);
    }
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// UNLN-DATA format v1:
//   magic "UNLN-DATA", u16 version, u32 n/c/h/w/k, u64 seed,
//   u8 split, u8 flags (bit0 = range_relaxed), provenance string,
//   f32 pixel block, u32 label block. All little-endian.
// ---------------------------------------------------------------------------

namespace {
constexpr char kDataMagic[] = "UNLN-DATA";
constexpr std::uint16_t kDataVersion = 1;
}  // namespace

void save_dataset(const ImageDataset& ds, const std::string& path) {
  ds.validate();
  detail::BinWriter w(path);
  w.raw(kDataMagic, 9);
  w.u16(kDataVersion);
  w.u32(static_cast<std::uint32_t>(ds.n));
  w.u32(static_cast<std::uint32_t>(ds.channels));
  w.u32(static_cast<std::uint32_t>(ds.height));
  w.u32(static_cast<std::uint32_t>(ds.width));
  w.u32(static_cast<std::uint32_t>(ds.classes));
  w.u64(ds.seed);
  w.u8(ds.split == "test" ? 1 : 0);
  w.u8(ds.range_relaxed ? 1 : 0);
  w.str(ds.provenance);
  w.f32_block(ds.images);
  for (std::int32_t l : ds.labels) w.u32(static_cast<std::uint32_t>(l));
}

ImageDataset load_dataset(const std::string& path) {
  detail::BinReader r(path);
  r.magic(kDataMagic, 9);
  const std::uint16_t version = r.u16();
  if (version != kDataVersion)
    throw FormatError(path + ": unsupported UNLN-DATA version " + std::to_string(version));

  ImageDataset ds;
  ds.n = static_cast<int>(r.u32());
  ds.channels = static_cast<int>(r.u32());
  ds.height = static_cast<int>(r.u32());
  ds.width = static_cast<int>(r.u32());
  ds.classes = static_cast<int>(r.u32());
  ds.seed = r.u64();
  ds.split = r.u8() == 1 ? "test" : "train";
  ds.range_relaxed = (r.u8() & 1) != 0;
  ds.provenance = r.str();

  const std::size_t pixels = static_cast<std::size_t>(ds.n) * ds.dim();
  const std::size_t expect = pixels * 4 + static_cast<std::size_t>(ds.n) * 4;
  if (r.remaining() != expect)
    throw FormatError(path + ": header declares " + std::to_string(expect) +
                      " payload bytes but " + std::to_string(r.remaining()) +
                      " remain at offset " + std::to_string(r.offset()));

  ds.images.resize(pixels);
  r.f32_block(ds.images);
  ds.labels.resize(ds.n);
  for (int i = 0; i < ds.n; ++i) ds.labels[i] = static_cast<std::int32_t>(r.u32());
  ds.validate();
  return ds;
}

ImageDataset subset_random(const ImageDataset& ds, std::size_t count, std::uint64_t seed) {
  if (count > static_cast<std::size_t>(ds.n))
    throw ConfigError("subset_random: requested " + std::to_string(count) +
                      " of " + std::to_string(ds.n) + " samples");
  std::vector<int> idx(ds.n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);

  ImageDataset out = ds;
  out.n = static_cast<int>(count);
  out.images.assign(count * static_cast<std::size_t>(ds.dim()), 0.0f);
  out.labels.assign(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(ds.image(idx[i]), ds.dim(), out.image(static_cast<int>(i)));
    out.labels[i] = ds.labels[idx[i]];
  }
  out.provenance = ds.provenance + "+subset(" + std::to_string(count) +
                   ",seed=" + std::to_string(seed) + ")";
  return out;
}

ImageDataset subset_random_fraction(const ImageDataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ConfigError("subset_random_fraction: fraction must be in [0,1]");
  const auto count = static_cast<std::size_t>(std::llround(fraction * ds.n));
  return subset_random(ds, count, seed);
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary version: records of 1 label byte + 3072 CHW pixel bytes.
// ---------------------------------------------------------------------------

ImageDataset load_cifar_batch(const std::string& path, int records) {
  constexpr int kRecord = 3073;
  detail::BinReader r(path);
  const std::size_t expect = static_cast<std::size_t>(records) * kRecord;
  if (r.size() != expect)
    throw FormatError(path + ": file is " + std::to_string(r.size()) +
                      " bytes, expected " + std::to_string(expect));

  ImageDataset ds;
  ds.n = records;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.classes = 10;
  ds.provenance = "cifar10(" + path + ")";
  ds.images.resize(static_cast<std::size_t>(records) * 3072);
  ds.labels.resize(records);

  std::vector<unsigned char> rec(kRecord);
  for (int i = 0; i < records; ++i) {
    r.raw(rec.data(), kRecord);
    if (rec[0] > 9)
      throw FormatError(path + ": label " + std::to_string(rec[0]) +
                        " out of range in record " + std::to_string(i));
    ds.labels[i] = rec[0];
    float* dst = ds.image(i);
    for (int j = 0; j < 3072; ++j) dst[j] = static_cast<float>(rec[j + 1]) / 255.0f;
  }
  return ds;
}

std::pair<ImageDataset, ImageDataset> load_cifar10(const std::string& dir) {
  ImageDataset train;
  for (int b = 1; b <= 5; ++b) {
    ImageDataset part = load_cifar_batch(dir + "/data_batch_" + std::to_string(b) + ".bin", 10000);
    if (b == 1) {
      train = std::move(part);
    } else {
      train.images.insert(train.images.end(), part.images.begin(), part.images.end());
      train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
      train.n += part.n;
    }
  }
  train.split = "train";
  train.provenance = "cifar10(" + dir + ")";
  ImageDataset test = load_cifar_batch(dir + "/test_batch.bin", 10000);
  test.split = "test";
  train.validate();
  test.validate();
  return {std::move(train), std::move(test)};
}

Matrix to_matrix(const ImageDataset& ds) {
  Matrix m(ds.n, ds.dim());
  const std::size_t total = ds.images.size();
  for (std::size_t i = 0; i < total; ++i) m.data[i] = ds.images[i];
  return m;
}

ImageDataset from_matrix(const Matrix& m, const ImageDataset& like, bool range_relaxed) {
  if (m.rows != static_cast<std::size_t>(like.n) ||
      m.cols != static_cast<std::size_t>(like.dim()))
    throw ShapeError("from_matrix: geometry mismatch");
  ImageDataset out = like;
  out.range_relaxed = range_relaxed;
  for (std::size_t i = 0; i < m.data.size(); ++i)
    out.images[i] = static_cast<float>(m.data[i]);
  return out;
}

}  // namespace unln
