#include "fraug/rng.hpp"

#include <cmath>
#include <numbers>

namespace fraug {

double Rng::normal(double mean, double sd) {
  // Box-Muller, always consuming exactly two uniform draws.
  double u1 = uniform01();
  double u2 = uniform01();
  if (u1 <= 0.0) u1 = 0x1.0p-53;  // guard against log(0)
  double r = std::sqrt(-2.0 * std::log(u1));
  return mean + sd * r * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

// FNV-1a over a byte stream, seeded, used only for seed derivation.
constexpr std::uint64_t kFnvPrime = 0x100000001B3ULL;

std::uint64_t fnv_mix(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv_mix_u64(std::uint64_t h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  return fnv_mix(h, bytes, 8);
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ULL;

// Finalize through one splitmix64 step so similar inputs do not yield
// correlated generator states.
std::uint64_t finalize(std::uint64_t h) {
  Rng r(h);
  return r.next_u64();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::string_view token) {
  std::uint64_t h = fnv_mix_u64(kFnvOffset, master);
  h = fnv_mix(h, token.data(), token.size());
  return finalize(h);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view token, std::uint64_t n) {
  std::uint64_t h = fnv_mix_u64(kFnvOffset, master);
  h = fnv_mix(h, token.data(), token.size());
  h = fnv_mix_u64(h, n);
  return finalize(h);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view token_a,
                          std::string_view token_b, std::uint64_t n) {
  std::uint64_t h = fnv_mix_u64(kFnvOffset, master);
  h = fnv_mix(h, token_a.data(), token_a.size());
  h = fnv_mix_u64(h, 0xFFULL);  // separator so ("ab","c") != ("a","bc")
  h = fnv_mix(h, token_b.data(), token_b.size());
  h = fnv_mix_u64(h, n);
  return finalize(h);
}

}  // namespace fraug
