#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "xlat/errors.hpp"
#include "xlat/tensor.hpp"

namespace xlat {

/// Deterministic random source with an explicit draw counter, so a stream can
/// be reconstructed from (seed, draws) alone. Every distribution below
/// consumes a fixed number of raw engine outputs, which keeps checkpointed
/// draw counts meaningful.
class SeededRng {
 public:
  explicit SeededRng(uint64_t seed) : seed_(seed), eng_(seed) {}

  static SeededRng resumed(uint64_t seed, uint64_t draws) {
    SeededRng r(seed);
    r.eng_.discard(draws);
    r.draws_ = draws;
    return r;
  }

  uint64_t seed() const { return seed_; }
  uint64_t draws() const { return draws_; }

  uint64_t next_u64() {
    ++draws_;
    return eng_();
  }

  /// Uniform in [0, 1); one draw.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

  /// Uniform in [a, b]; one draw.
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  /// Standard normal via Box-Muller (cosine branch); always two draws.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1p-53;
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    return mean + stddev * z;
  }

  /// Uniform integer in [0, n); one draw (multiply-shift, bias < n / 2^64).
  int64_t uniform_int(int64_t n) {
    if (n <= 0) throw ContractError("uniform_int: n must be positive");
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64());
    return static_cast<int64_t>((wide * static_cast<uint64_t>(n)) >> 64);
  }

  /// Fisher-Yates; n - 1 draws for a sequence of length n.
  template <typename V>
  void shuffle(V& seq) {
    for (int64_t i = static_cast<int64_t>(seq.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(seq[static_cast<size_t>(i)], seq[static_cast<size_t>(j)]);
    }
  }

  template <typename T>
  void fill_uniform(Tensor<T>& t, double a, double b) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(a, b));
  }

  template <typename T>
  void fill_normal(Tensor<T>& t, double mean, double stddev) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
  }

  /// Independent child stream keyed by a label; stable across runs.
  SeededRng derive(std::string_view tag) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    return SeededRng(splitmix64(seed_ ^ h));
  }

  static uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  uint64_t seed_ = 0;
  uint64_t draws_ = 0;
  std::mt19937_64 eng_;
};

}  // namespace xlat
