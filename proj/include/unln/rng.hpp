#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace unln {

// splitmix64 mixing step (Steele, Lea, Flood: fast splittable PRNGs).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Per-stage seed derived from a root seed and a stage label. Adding a new
// stage to a pipeline never perturbs the seeds of existing stages.
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view stage) {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the label bytes
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::uint64_t s = root ^ h;
  return splitmix64(s);
}

// Variant that folds in two integer coordinates (e.g. epoch and batch index).
inline std::uint64_t stage_seed(std::uint64_t root, std::string_view stage,
                                std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = stage_seed(root, stage);
  s ^= 0x9e3779b97f4a7c15ull * (a + 1);
  std::uint64_t t = splitmix64(s);
  t ^= 0xbf58476d1ce4e5b9ull * (b + 1);
  return splitmix64(t);
}

// Deterministic generator: the mt19937_64 engine has a sequence fixed by the
// standard; the value mappings below are explicit because the std
// distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool coin() { return (next_u64() >> 63) != 0; }

  // Uniform index in [0, n). Modulo bias is ~n/2^64, irrelevant here.
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Standard normal via Marsaglia's polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  // In-place Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace unln
