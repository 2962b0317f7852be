#pragma once

#include <cstdint>
#include <random>

#include "diffrecon/tensor.hpp"

namespace diffrecon {

/// Seeded RNG wrapper. All randomness in the library flows through this type
/// so that every run is reproducible from its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {  // inclusive range
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  double gauss() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double gauss(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  Tensor gauss_tensor(std::vector<int> shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.vec()) v = gauss() * stddev;
    return t;
  }

  /// k distinct indices drawn uniformly from [0, n) (partial Fisher-Yates).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = 0; i < k; ++i) {
      int j = static_cast<int>(uniform_int(i, n - 1));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(k));
    return idx;
  }

  /// Derives an independent child stream; used to decorrelate sub-tasks
  /// without consuming unpredictable amounts of the parent stream.
  Rng fork(std::uint64_t salt) { return Rng(engine_() ^ (salt * 0x9E3779B97F4A7C15ULL)); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace diffrecon
