#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "test_util.hpp"
#include "unln/data.hpp"
#include "unln/error.hpp"
#include "unln/poisons.hpp"
#include "unln/probes.hpp"
#include "unln/rng.hpp"

using namespace unln;

namespace {

ImageDataset midgray_dataset(int k, int n_per_class, int h, int w) {
  ImageDataset ds;
  ds.n = k * n_per_class;
  ds.channels = 3;
  ds.height = h;
  ds.width = w;
  ds.classes = k;
  ds.provenance = "midgray";
  ds.images.assign(static_cast<std::size_t>(ds.n) * ds.dim(), 0.5f);
  ds.labels.resize(ds.n);
  for (int i = 0; i < ds.n; ++i) ds.labels[i] = i % k;
  return ds;
}

const LbfgsConfig kProbeCfg{500, 0.5, 10};

}  // namespace

TEST_CASE("probe: all-zero perturbations return chance accuracy with a warning") {
  const ImageDataset clean = midgray_dataset(4, 10, 8, 8);
  const ProbeResult r =
      separability_probe(ProbeTarget::Perturbations, clean, &clean, kProbeCfg);
  CHECK(r.degenerate);
  CHECK(r.train_accuracy == doctest::Approx(0.25));
}

TEST_CASE("probe: class-wise noise perturbations are perfectly separable") {
  const ImageDataset clean = midgray_dataset(4, 60, 8, 8);  // n=240 > d=192
  const PerturbationSet p =
      gen_classwise(ClasswiseVariant::RandomNoise, 4, clean.shape(), 8.0 / 255, 0, 3);
  const ImageDataset poisoned = apply_poison(clean, p);
  const ProbeResult r =
      separability_probe(ProbeTarget::Perturbations, poisoned, &clean, kProbeCfg);
  CHECK(r.train_accuracy >= 0.99);
}

TEST_CASE("probe: accuracy invariant under a shared permutation of sample order") {
  const ImageDataset clean = midgray_dataset(3, 40, 8, 8);
  const PerturbationSet p =
      gen_classwise(ClasswiseVariant::Regions, 3, clean.shape(), 8.0 / 255, 4, 5);
  const ImageDataset poisoned = apply_poison(clean, p);

  ImageDataset poisoned_perm = poisoned, clean_perm = clean;
  std::vector<int> order(poisoned.n);
  for (int i = 0; i < poisoned.n; ++i) order[i] = i;
  Rng rng(17);
  rng.shuffle(order);
  for (int i = 0; i < poisoned.n; ++i) {
    std::copy_n(poisoned.image(order[i]), poisoned.dim(), poisoned_perm.image(i));
    std::copy_n(clean.image(order[i]), clean.dim(), clean_perm.image(i));
    poisoned_perm.labels[i] = poisoned.labels[order[i]];
    clean_perm.labels[i] = clean.labels[order[i]];
  }
  const double a =
      separability_probe(ProbeTarget::Perturbations, poisoned, &clean, kProbeCfg)
          .train_accuracy;
  const double b =
      separability_probe(ProbeTarget::Perturbations, poisoned_perm, &clean_perm, kProbeCfg)
          .train_accuracy;
  CHECK(a == doctest::Approx(1.0));
  CHECK(b == doctest::Approx(1.0));
}

TEST_CASE("probe: requires the clean set for the perturbations target") {
  const ImageDataset clean = midgray_dataset(3, 5, 8, 8);
  CHECK_THROWS_AS(separability_probe(ProbeTarget::Perturbations, clean, nullptr, kProbeCfg),
                  ConfigError);
}

TEST_CASE("class averages: single-image classes reproduce the images") {
  auto [train, test] = generate_synthetic_clean(4, 5, 8, 8, 9);
  ImageDataset one;
  one.n = 4;
  one.channels = 3;
  one.height = 8;
  one.width = 8;
  one.classes = 4;
  one.images.resize(static_cast<std::size_t>(4) * one.dim());
  one.labels.resize(4);
  for (int i = 0; i < 4; ++i) {
    std::copy_n(train.image(i * 3), one.dim(), one.image(i));
    one.labels[i] = i;
  }
  const auto avgs = class_average_images(one);
  for (int c = 0; c < 4; ++c)
    for (int j = 0; j < one.dim(); ++j)
      REQUIRE(avgs[c][j] == doctest::Approx(one.image(c)[j]).epsilon(1e-6));
}

TEST_CASE("class averages: expose the class-wise delta on the mid-gray fixture") {
  const ImageDataset clean = midgray_dataset(4, 20, 8, 8);
  const PerturbationSet p =
      gen_classwise(ClasswiseVariant::RandomNoise, 4, clean.shape(), 8.0 / 255, 0, 7);
  const ImageDataset poisoned = apply_poison(clean, p);
  const auto avg_p = class_average_images(poisoned);
  const auto avg_c = class_average_images(clean);
  for (int c = 0; c < 4; ++c)
    for (int j = 0; j < clean.dim(); ++j)
      REQUIRE(std::fabs((avg_p[c][j] - avg_c[c][j]) - p.delta(c)[j]) <= 1e-5);
}

TEST_CASE("class averages: balanced dataset overall mean equals mean of class means") {
  auto [train, test] = generate_synthetic_clean(5, 20, 8, 8, 11);
  const auto avgs = class_average_images(train);
  const int d = train.dim();
  for (int j = 0; j < d; j += 37) {
    double overall = 0.0;
    for (int i = 0; i < train.n; ++i) overall += train.image(i)[j];
    overall /= train.n;
    double of_means = 0.0;
    for (int c = 0; c < 5; ++c) of_means += avgs[c][j];
    of_means /= 5;
    REQUIRE(overall == doctest::Approx(of_means).epsilon(1e-5));
  }
}

TEST_CASE("class averages: empty class errors with the class index") {
  ImageDataset ds = midgray_dataset(2, 4, 8, 8);
  ds.classes = 3;  // class 2 has no samples
  try {
    class_average_images(ds);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("class 2") != std::string::npos);
  }
}

namespace {

struct Ppm {
  int w = 0, h = 0;
  std::vector<unsigned char> rgb;
};

Ppm read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::string magic;
  int maxval = 0;
  Ppm p;
  f >> magic >> p.w >> p.h >> maxval;
  REQUIRE(magic == "P6");
  REQUIRE(maxval == 255);
  f.get();  // single whitespace after header
  p.rgb.resize(static_cast<std::size_t>(p.w) * p.h * 3);
  f.read(reinterpret_cast<char*>(p.rgb.data()), static_cast<std::streamsize>(p.rgb.size()));
  REQUIRE(f.good());
  return p;
}

}  // namespace

TEST_CASE("weight visualization: constant column maps to mid-gray 128") {
  test::TempDir tmp("viz");
  Matrix w(3 * 8 * 8, 2, 0.0);
  for (std::size_t j = 0; j < w.rows; ++j) w(j, 0) = 0.42;  // constant
  for (std::size_t j = 0; j < w.rows; ++j) w(j, 1) = static_cast<double>(j);
  const auto paths = export_weight_visualization(w, {3, 8, 8}, tmp.file("w"));
  REQUIRE(paths.size() == 2);
  const Ppm p0 = read_ppm(paths[0]);
  CHECK(p0.w == 8);
  CHECK(p0.h == 8);
  for (unsigned char b : p0.rgb) REQUIRE(b == 128);
}

TEST_CASE("weight visualization: a lone hot pixel saturates in the output") {
  test::TempDir tmp("viz2");
  Matrix w(3 * 8 * 8, 1, 0.0);
  // all 3 channels of pixel (y=2, x=5) large, like a one-pixel poison probe
  for (int ch = 0; ch < 3; ++ch) w((ch * 8 + 2) * 8 + 5, 0) = 10.0;
  const auto paths = export_weight_visualization(w, {3, 8, 8}, tmp.file("w"));
  const Ppm p = read_ppm(paths[0]);
  int saturated = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (p.rgb[(y * 8 + x) * 3] == 255 && p.rgb[(y * 8 + x) * 3 + 1] == 255 &&
          p.rgb[(y * 8 + x) * 3 + 2] == 255)
        ++saturated;
  CHECK(saturated == 1);
  CHECK(p.rgb[(2 * 8 + 5) * 3] == 255);
}

TEST_CASE("weight visualization: shape mismatch errors") {
  Matrix w(100, 2, 0.0);
  CHECK_THROWS_AS(export_weight_visualization(w, {3, 8, 8}, "/tmp/x"), ShapeError);
}
