#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "unln/data.hpp"
#include "unln/error.hpp"

using namespace unln;
namespace fs = std::filesystem;

TEST_CASE("synthetic: split arithmetic and balance") {
  auto [train, test] = generate_synthetic_clean(10, 600, 16, 16, 42);
  CHECK(train.n == 4800);
  CHECK(test.n == 1200);
  CHECK(train.classes == 10);
  CHECK(train.split == "train");
  CHECK(test.split == "test");

  for (const ImageDataset* ds : {&train, &test}) {
    std::vector<int> counts(10, 0);
    for (auto l : ds->labels) ++counts[l];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);
  }
}

TEST_CASE("synthetic: pixels stay in [0,1]") {
  auto [train, test] = generate_synthetic_clean(8, 40, 16, 16, 7);
  for (float v : train.images) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  train.validate();
  test.validate();
}

TEST_CASE("synthetic: pure function of (parameters, seed)") {
  auto [a_train, a_test] = generate_synthetic_clean(5, 30, 16, 16, 99);
  auto [b_train, b_test] = generate_synthetic_clean(5, 30, 16, 16, 99);
  CHECK(a_train.images == b_train.images);
  CHECK(a_train.labels == b_train.labels);
  CHECK(a_test.images == b_test.images);

  auto [c_train, c_test] = generate_synthetic_clean(5, 30, 16, 16, 100);
  CHECK(a_train.images != c_train.images);
}

TEST_CASE("synthetic: config errors") {
  CHECK_THROWS_AS(generate_synthetic_clean(17, 10, 16, 16, 1), ConfigError);  // > 16 combos
  CHECK_THROWS_AS(generate_synthetic_clean(1, 10, 16, 16, 1), ConfigError);
  CHECK_THROWS_AS(generate_synthetic_clean(4, 10, 15, 16, 1), ConfigError);  // not /4
}

TEST_CASE("dataset io: round-trip is bitwise identical") {
  test::TempDir tmp("data");
  auto [train, test] = generate_synthetic_clean(4, 20, 8, 8, 5);
  const std::string path = tmp.file("train.unld");
  save_dataset(train, path);
  const ImageDataset back = load_dataset(path);
  CHECK(back.images == train.images);
  CHECK(back.labels == train.labels);
  CHECK(back.n == train.n);
  CHECK(back.classes == train.classes);
  CHECK(back.split == train.split);
  CHECK(back.seed == train.seed);
  CHECK(back.provenance == train.provenance);
}

TEST_CASE("dataset io: truncated file errors, no partial dataset") {
  test::TempDir tmp("data2");
  auto [train, test] = generate_synthetic_clean(3, 10, 8, 8, 6);
  const std::string path = tmp.file("t.unld");
  save_dataset(test, path);
  fs::resize_file(path, fs::file_size(path) - 100);
  CHECK_THROWS_AS(load_dataset(path), FormatError);
}

TEST_CASE("dataset io: bad magic names offset 0") {
  test::TempDir tmp("data3");
  const std::string path = tmp.file("bad.unld");
  std::ofstream(path, std::ios::binary) << "NOTAFILE-with-enough-bytes-to-read";
  try {
    load_dataset(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }
}

TEST_CASE("dataset io: header inconsistent with file size") {
  test::TempDir tmp("data4");
  auto [train, test] = generate_synthetic_clean(3, 10, 8, 8, 8);
  const std::string path = tmp.file("t.unld");
  save_dataset(test, path);
  // Appending junk makes the payload larger than the header implies.
  std::ofstream(path, std::ios::binary | std::ios::app) << "extra";
  CHECK_THROWS_AS(load_dataset(path), FormatError);
}

TEST_CASE("subset_random: fraction 1.0 permutes the full set") {
  auto [train, test] = generate_synthetic_clean(4, 25, 8, 8, 11);
  const ImageDataset sub = subset_random_fraction(test, 1.0, 3);
  REQUIRE(sub.n == test.n);
  std::vector<std::int32_t> a = sub.labels, b = test.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("subset_random: 10% of 4800 is 480 and preserves K") {
  auto [train, test] = generate_synthetic_clean(10, 600, 16, 16, 12);
  const ImageDataset sub = subset_random_fraction(train, 0.1, 4);
  CHECK(sub.n == 480);
  CHECK(sub.classes == 10);
}

TEST_CASE("subset_random: deterministic in seed, rejects oversize") {
  auto [train, test] = generate_synthetic_clean(4, 20, 8, 8, 13);
  const ImageDataset a = subset_random(test, 9, 21);
  const ImageDataset b = subset_random(test, 9, 21);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK_THROWS_AS(subset_random(test, static_cast<std::size_t>(test.n) + 1, 1), ConfigError);
}

namespace {

// Writes a synthetic CIFAR batch: `records` records, all zeros except the
// first record, which uses the given label and pixel bytes.
void write_cifar_fixture(const std::string& path, int records, unsigned char label,
                         const std::vector<unsigned char>& first_pixels) {
  std::ofstream f(path, std::ios::binary);
  std::vector<char> rec(3073, 0);
  rec[0] = static_cast<char>(label);
  for (std::size_t i = 0; i < first_pixels.size() && i < 3072; ++i)
    rec[i + 1] = static_cast<char>(first_pixels[i]);
  f.write(rec.data(), rec.size());
  std::fill(rec.begin(), rec.end(), 0);
  for (int i = 1; i < records; ++i) f.write(rec.data(), rec.size());
}

}  // namespace

TEST_CASE("cifar: fixture record parses to the exact expected tensor") {
  test::TempDir tmp("cifar");
  std::vector<unsigned char> pixels(3072);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    pixels[i] = static_cast<unsigned char>((7 * i + 3) % 256);
  const std::string path = tmp.file("data_batch_1.bin");
  write_cifar_fixture(path, 10000, 7, pixels);

  const ImageDataset ds = load_cifar_batch(path, 10000);
  CHECK(ds.n == 10000);
  CHECK(ds.channels == 3);
  CHECK(ds.height == 32);
  CHECK(ds.labels[0] == 7);
  for (int j = 0; j < 3072; ++j)
    REQUIRE(ds.image(0)[j] == static_cast<float>(pixels[j]) / 255.0f);
  for (float v : ds.images) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
}

TEST_CASE("cifar: wrong file size is a format error") {
  test::TempDir tmp("cifar2");
  const std::string path = tmp.file("data_batch_1.bin");
  std::ofstream(path, std::ios::binary) << "short";
  CHECK_THROWS_AS(load_cifar_batch(path, 10000), FormatError);
}

TEST_CASE("cifar: label out of range names the record") {
  test::TempDir tmp("cifar3");
  const std::string path = tmp.file("data_batch_1.bin");
  write_cifar_fixture(path, 100, 11, {});
  try {
    load_cifar_batch(path, 100);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("record 0") != std::string::npos);
  }
}

TEST_CASE("to_matrix/from_matrix round trip") {
  auto [train, test] = generate_synthetic_clean(3, 10, 8, 8, 15);
  const Matrix m = to_matrix(test);
  CHECK(m.rows == static_cast<std::size_t>(test.n));
  CHECK(m.cols == static_cast<std::size_t>(test.dim()));
  const ImageDataset back = from_matrix(m, test, false);
  CHECK(back.images == test.images);
}
