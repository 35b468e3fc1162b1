#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "coldmap/error.hpp"

namespace coldmap {

// All sampling in the toolkit goes through this wrapper so that splits and
// initializations replicate across implementations. The recipe is pinned:
//   engine        mt19937_64 seeded directly with the 64-bit seed
//   uniform01     (next() >> 11) * 2^-53, in [0,1)
//   bounded(n)    Lemire multiply-shift with rejection (unbiased)
//   sample below  partial Fisher-Yates / Efraimidis-Spirakis on those draws
// std::uniform_* distributions are implementation-defined and never used.
inline constexpr const char* kRngAlgorithm = "mt19937_64";

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t bounded(std::uint64_t n) {
    require(n > 0, "bounded: n must be positive");
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // Marsaglia polar method; used only where the consumer documents it.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // k distinct indices from [0, n), via partial Fisher-Yates; draw order kept.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
    require(k <= n, "sample_indices: k exceeds n");
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(bounded(n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  // k distinct indices weighted by w (Efraimidis-Spirakis, key = log(u)/w,
  // top-k keys win, ties broken by lower index). Zero weights never selected
  // unless fewer than k positive weights exist.
  std::vector<std::size_t> weighted_sample_indices(const std::vector<double>& weights, std::size_t k) {
    require(k <= weights.size(), "weighted_sample_indices: k exceeds population");
    std::vector<std::pair<double, std::size_t>> keyed(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double u = uniform01();
      const double w = weights[i];
      const double key = w > 0.0 ? std::log(std::max(u, 1e-300)) / w
                                 : -std::numeric_limits<double>::infinity();
      keyed[i] = {key, i};
    }
    std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = keyed[i].second;
    return out;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Per-module seeds derive from the master seed by fixed offsets (wrapping
// 64-bit add), so one seed in the config reproduces the whole run.
enum class SeedModule : std::uint64_t {
  split = 1,
  subsample_target = 2,
  subsample_auxiliary = 3,
  factorize_target = 4,
  factorize_auxiliary = 5,
  synthetic = 6,
  grid_split = 7,
};

inline std::uint64_t derive_seed(std::uint64_t master, SeedModule module) {
  return master + static_cast<std::uint64_t>(module);
}

}  // namespace coldmap
