#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace fraug {

// Deterministic generator with identical output on every platform.
// splitmix64 core; all distributions are implemented here so results
// never depend on the standard library's <random> internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi], inclusive. Always consumes one draw.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    std::uint64_t span = hi - lo + 1;  // hi >= lo expected; span 0 means full range
    std::uint64_t r = next_u64();
    if (span == 0) return r;
    return lo + static_cast<std::uint64_t>(
                    (static_cast<unsigned __int128>(r) * span) >> 64);
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, n - 1));
  }

  // Box-Muller; draws two uniforms per call, no cached spare.
  double normal(double mean = 0.0, double sd = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, i - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[index(v.size())];
  }

 private:
  std::uint64_t state_;
};

// Stable seed derivation: hash of the master seed plus a chain of string /
// integer tokens (e.g. utterance id, model index). Same inputs give the
// same sub-seed on every platform and in every run.
std::uint64_t derive_seed(std::uint64_t master, std::string_view token);
std::uint64_t derive_seed(std::uint64_t master, std::string_view token, std::uint64_t n);
std::uint64_t derive_seed(std::uint64_t master, std::string_view token_a,
                          std::string_view token_b, std::uint64_t n);

}  // namespace fraug
