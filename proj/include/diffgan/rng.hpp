#pragma once

#include "diffgan/tensor.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace diffgan {

/// Seeded random stream with named, independent substreams.
///
/// `substream("noise")` depends only on this stream's seed and the name, never
/// on how many values were drawn so far, so adding a consumer does not shift
/// the others. Single owner; use separate substreams across threads.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  RngStream substream(std::string_view purpose) const {
    // FNV-1a keeps the derivation stable across standard libraries.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : purpose) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return RngStream(mix(seed_ ^ h));
  }

  RngStream substream(std::uint64_t index) const { return RngStream(mix(seed_ + 0x9e3779b97f4a7c15ULL * (index + 1))); }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// i.i.d. standard normal tensor.
template <class S = float>
Tensor<S> sample_gaussian(RngStream& rng, Shape shape) {
  Tensor<S> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<S>(rng.normal());
  return t;
}

}  // namespace diffgan
