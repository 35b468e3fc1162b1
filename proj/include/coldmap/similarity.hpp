#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "coldmap/error.hpp"
#include "coldmap/rating_matrix.hpp"
#include "coldmap/version.hpp"

namespace coldmap {

// Probability table for rated items, indexed by rating score 1..5.
using RatedProbabilityMap = std::array<double, 6>;

inline constexpr RatedProbabilityMap kDefaultRatedMap = {0.0, 1.0, 0.8, 0.5, 0.2, 0.0};

struct SimilarityParams {
  double gamma1 = 0.25;
  double gamma2 = 3.0;
  double gamma3 = 2.0;
  double sigma = 6.0;
  double base = 2.0;
  double rho1 = 0.6;
  double rho2 = 0.2;
  double rho3 = 0.2;
  int high_rating_threshold = 4;
  RatedProbabilityMap rated_map = kDefaultRatedMap;

  void validate() const {
    require(gamma1 > 0 && gamma2 > 0 && gamma3 > 0, "similarity: gammas must be positive");
    require(sigma > 0, "similarity: sigma must be positive");
    require(base > 1, "similarity: log base must exceed 1");
    require(rho1 >= 0 && rho2 >= 0 && rho3 >= 0, "similarity: rho weights must be nonnegative");
    require(std::abs(rho1 + rho2 + rho3 - 1.0) <= 1e-12, "similarity: rho weights must sum to 1");
    require(high_rating_threshold >= kMinRating && high_rating_threshold <= kMaxRating,
            "similarity: high rating threshold out of range");
    for (int r = kMinRating; r <= kMaxRating; ++r)
      require(rated_map[r] >= 0.0 && rated_map[r] <= 1.0,
              "similarity: rated-probability entries must lie in [0,1]");
  }
};

enum class SimilarityComponent { s1, s2, s3, combined };

inline const char* to_string(SimilarityComponent c) {
  switch (c) {
    case SimilarityComponent::s1: return "s1";
    case SimilarityComponent::s2: return "s2";
    case SimilarityComponent::s3: return "s3";
    case SimilarityComponent::combined: return "combined";
  }
  return "?";
}

inline SimilarityComponent similarity_component_from_string(const std::string& s) {
  if (s == "s1") return SimilarityComponent::s1;
  if (s == "s2") return SimilarityComponent::s2;
  if (s == "s3") return SimilarityComponent::s3;
  if (s == "combined") return SimilarityComponent::combined;
  throw Error("unknown similarity component: " + s);
}

// Symmetric user-user similarity, upper triangle stored row-major, diagonal
// defined as 1.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  SimilarityMatrix(int n_users, SimilarityComponent component)
      : n_(n_users), component_(component),
        tri_(static_cast<std::size_t>(n_users) * (n_users - 1) / 2, 0.0) {}

  int n_users() const { return n_; }
  SimilarityComponent component() const { return component_; }

  double at(int u, int v) const {
    if (u == v) return 1.0;
    return tri_[tri_index(u, v)];
  }

  void set(int u, int v, double value) {
    require(u != v, "SimilarityMatrix: diagonal is fixed at 1");
    tri_[tri_index(u, v)] = value;
  }

  const std::vector<double>& values() const { return tri_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kSimilarityFormatVersion;
    j["n_users"] = n_;
    j["component"] = to_string(component_);
    j["values"] = tri_;
    return j;
  }

  static SimilarityMatrix from_json(const nlohmann::json& j) {
    require(j.value("version", "") == kSimilarityFormatVersion,
            "similarity artifact has unsupported version tag");
    SimilarityMatrix s(j.at("n_users").get<int>(),
                       similarity_component_from_string(j.at("component")));
    std::vector<double> vals = j.at("values");
    require(vals.size() == s.tri_.size(), "similarity artifact: value count mismatch");
    s.tri_ = std::move(vals);
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    out << to_json().dump() << "\n";
    require(out.good(), "write failed: " + path);
  }

  static SimilarityMatrix load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

 private:
  std::size_t tri_index(int u, int v) const {
    if (u > v) std::swap(u, v);
    // offset of row u = u*n - u*(u+1)/2, column v ahead of the diagonal
    return static_cast<std::size_t>(u) * n_ - static_cast<std::size_t>(u) * (u + 1) / 2 +
           (v - u - 1);
  }

  int n_ = 0;
  SimilarityComponent component_ = SimilarityComponent::combined;
  std::vector<double> tri_;
};

// f3(x) = 2 / (1 + e^{-sigma x}) - 1, a [0,1) squashing of nonnegative x.
inline double f3_squash(double x, double sigma) { return 2.0 / (1.0 + std::exp(-sigma * x)) - 1.0; }

// No-interest probabilities P_ui in decomposed form: item terms, user terms
// and rated lookups are precomputed so a single probability and per-user
// totals over all items are both cheap.
class NoInterestProfile {
 public:
  NoInterestProfile(const RatingMatrix& m, double sigma, const RatedProbabilityMap& rated_map,
                    int high_rating_threshold)
      : m_(&m), rated_map_(rated_map) {
    require(sigma > 0, "NoInterestProfile: sigma must be positive");
    const int n = m.n_users(), n_items = m.n_items();
    const double nd = static_cast<double>(n), md = static_cast<double>(n_items);
    user_f1_.resize(n);
    for (int u = 0; u < n; ++u) {
      const double nu = static_cast<double>(m.user_rating_count(u));
      user_f1_[u] = std::sqrt(std::max(0.0, 1.0 - (nu * nu) / (md * md)));
    }
    item_f2_.resize(n_items);
    item_unpop_.resize(n_items);
    for (int i = 0; i < n_items; ++i) {
      const double ni = static_cast<double>(m.item_rating_count(i));
      item_f2_[i] = std::sqrt(std::max(0.0, 1.0 - (ni * ni) / (nd * nd)));
      int high = 0;
      for (const auto& [u, r] : m.item_col(i))
        if (r >= high_rating_threshold) ++high;
      // popularity * reputation term; n_Hi/n_i defined as 0 for unrated items
      const double rep = ni > 0 ? static_cast<double>(high) / ni : 0.0;
      item_unpop_[i] = 1.0 - f3_squash(ni / nd, sigma) * f3_squash(rep, sigma);
    }
    sum_unpop_ = 0.0;
    sum_f2_unpop_ = 0.0;
    for (int i = 0; i < n_items; ++i) {
      sum_unpop_ += item_unpop_[i];
      sum_f2_unpop_ += item_f2_[i] * item_unpop_[i];
    }
    user_total_.resize(n);
    for (int u = 0; u < n; ++u) user_total_[u] = compute_total(u);
  }

  double unrated_probability(int u, int i) const {
    return (1.0 - user_f1_[u] * item_f2_[i]) * item_unpop_[i];
  }

  double probability(int u, int i) const {
    if (auto r = m_->rating(u, i)) return rated_map_[*r];
    return unrated_probability(u, i);
  }

  // Sum of P_uz over all items, precomputed per user.
  double total(int u) const { return user_total_[u]; }

  double rated_probability(int rating) const { return rated_map_[rating]; }

 private:
  double compute_total(int u) const {
    // Sum over unrated items via the global sums, corrected by the rated set.
    double total = sum_unpop_ - user_f1_[u] * sum_f2_unpop_;
    for (const auto& [i, r] : m_->user_row(u)) {
      total -= unrated_probability(u, i);
      total += rated_map_[r];
    }
    return total;
  }

  const RatingMatrix* m_;
  RatedProbabilityMap rated_map_;
  std::vector<double> user_f1_, item_f2_, item_unpop_;
  std::vector<double> user_total_;
  double sum_unpop_ = 0.0, sum_f2_unpop_ = 0.0;
};

// P_ui for a single pair: the rated lookup or the two-bracket estimate.
inline double no_interest_probability(const RatingMatrix& m, int u, int i, double sigma,
                                      const RatedProbabilityMap& rated_map = kDefaultRatedMap,
                                      int high_rating_threshold = 4) {
  if (auto r = m.rating(u, i)) return rated_map[*r];
  const double n = m.n_users(), n_items = m.n_items();
  const double nu = m.user_rating_count(u);
  const double ni = m.item_rating_count(i);
  int high = 0;
  for (const auto& [w, r] : m.item_col(i))
    if (r >= high_rating_threshold) ++high;
  const double f1 = std::sqrt(std::max(0.0, 1.0 - nu * nu / (n_items * n_items)));
  const double f2 = std::sqrt(std::max(0.0, 1.0 - ni * ni / (n * n)));
  const double rep = ni > 0 ? high / ni : 0.0;
  return (1.0 - f1 * f2) * (1.0 - f3_squash(ni / n, sigma) * f3_squash(rep, sigma));
}

namespace detail {

// Merge the sorted rating rows of u and v; returns (|C_uv|, sum of squared
// rating differences, signed sum of rated-probability differences over C_uv).
struct CommonStats {
  int count = 0;
  double sq_diff = 0.0;
  double rated_prob_diff = 0.0;
};

inline CommonStats common_items(const RatingMatrix& m, int u, int v,
                                const RatedProbabilityMap& rated_map) {
  CommonStats stats;
  const auto& a = m.user_row(u);
  const auto& b = m.user_row(v);
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      const double d = static_cast<double>(a[i].second - b[j].second);
      stats.count += 1;
      stats.sq_diff += d * d;
      stats.rated_prob_diff += rated_map[a[i].second] - rated_map[b[j].second];
      ++i;
      ++j;
    }
  }
  return stats;
}

}  // namespace detail

// S1: exponential of the mean squared difference over commonly rated items.
// No common items means no evidence, so 0.
inline double common_rating_similarity(const RatingMatrix& m, int u, int v, double gamma1) {
  const auto stats = detail::common_items(m, u, v, kDefaultRatedMap);
  if (stats.count == 0) return 0.0;
  return std::exp(-gamma1 * stats.sq_diff / static_cast<double>(stats.count));
}

// S2: exponential of |sum of P differences| over items outside C_uv, using
// the identity  sum_{z not in C} (P_uz - P_vz) = (T_u - T_v) - sum_{z in C} (...)
// so each pair costs O(n_u + n_v) once the profile is built.
inline double no_interest_similarity(const RatingMatrix& m, const NoInterestProfile& profile,
                                     int u, int v, double gamma2,
                                     const RatedProbabilityMap& rated_map = kDefaultRatedMap) {
  const auto stats = detail::common_items(m, u, v, rated_map);
  const int outside = m.n_items() - stats.count;
  if (outside == 0) return 1.0;  // empty sum, D = 0 limit
  const double diff =
      std::abs((profile.total(u) - profile.total(v)) - stats.rated_prob_diff);
  return std::exp(-gamma2 * diff / static_cast<double>(outside));
}

// TF-IDF style rating-bias profile: component r is the user's frequency of
// score r times log_base(n / uf(r)), 0 whenever the user never used r.
inline std::array<double, 5> rating_bias_profile(const RatingMatrix& m, int u, double base) {
  require(m.user_rating_count(u) > 0, "rating_bias_profile: user has no ratings");
  require(base > 1, "rating_bias_profile: base must exceed 1");
  std::array<int, 6> user_freq{};
  for (const auto& [i, r] : m.user_row(u)) ++user_freq[r];
  std::array<int, 6> users_using{};
  for (int w = 0; w < m.n_users(); ++w) {
    std::array<bool, 6> seen{};
    for (const auto& [i, r] : m.user_row(w)) seen[r] = true;
    for (int r = kMinRating; r <= kMaxRating; ++r)
      if (seen[r]) ++users_using[r];
  }
  const double total = static_cast<double>(m.user_rating_count(u));
  const double log_base = std::log(base);
  std::array<double, 5> profile{};
  for (int r = kMinRating; r <= kMaxRating; ++r) {
    if (user_freq[r] == 0) continue;  // rf = 0, and uf(r) = 0 never reaches the log
    const double rf = static_cast<double>(user_freq[r]) / total;
    const double idf = std::log(static_cast<double>(m.n_users()) / users_using[r]) / log_base;
    profile[r - 1] = rf * idf;
  }
  return profile;
}

inline double rating_bias_similarity(const RatingMatrix& m, int u, int v, double gamma3,
                                     double base) {
  const auto pu = rating_bias_profile(m, u, base);
  const auto pv = rating_bias_profile(m, v, base);
  double diff = 0.0;
  for (int r = 0; r < 5; ++r) diff += pu[r] - pv[r];
  return std::exp(-gamma3 * std::abs(diff));
}

struct SimilaritySet {
  SimilarityMatrix s1, s2, s3, combined;
  bool has_components = false;
};

// All pairwise similarities for one domain. Pairs are processed in
// parallel-safe strided row chunks with disjoint writes; the result is
// identical for any job count.
inline SimilaritySet compute_similarities(const RatingMatrix& m, const SimilarityParams& params,
                                          int jobs = 1, bool keep_components = true) {
  params.validate();
  const int n = m.n_users();
  SimilaritySet out;
  out.combined = SimilarityMatrix(n, SimilarityComponent::combined);
  out.has_components = keep_components;
  if (keep_components) {
    out.s1 = SimilarityMatrix(n, SimilarityComponent::s1);
    out.s2 = SimilarityMatrix(n, SimilarityComponent::s2);
    out.s3 = SimilarityMatrix(n, SimilarityComponent::s3);
  }

  const NoInterestProfile profile(m, params.sigma, params.rated_map,
                                  params.high_rating_threshold);

  // Per-user bias-profile sums; only the sums enter D3.
  std::vector<double> bias_sum(n, 0.0);
  {
    std::array<int, 6> users_using{};
    for (int w = 0; w < n; ++w) {
      std::array<bool, 6> seen{};
      for (const auto& [i, r] : m.user_row(w)) seen[r] = true;
      for (int r = kMinRating; r <= kMaxRating; ++r)
        if (seen[r]) ++users_using[r];
    }
    const double log_base = std::log(params.base);
    for (int u = 0; u < n; ++u) {
      std::array<int, 6> freq{};
      for (const auto& [i, r] : m.user_row(u)) ++freq[r];
      const double total = static_cast<double>(m.user_rating_count(u));
      double sum = 0.0;
      for (int r = kMinRating; r <= kMaxRating; ++r) {
        if (freq[r] == 0) continue;
        sum += (freq[r] / total) * (std::log(static_cast<double>(n) / users_using[r]) / log_base);
      }
      bias_sum[u] = sum;
    }
  }

  auto process_row = [&](int u) {
    for (int v = u + 1; v < n; ++v) {
      const auto stats = detail::common_items(m, u, v, params.rated_map);
      const double s1 =
          stats.count > 0 ? std::exp(-params.gamma1 * stats.sq_diff / stats.count) : 0.0;
      const int outside = m.n_items() - stats.count;
      double s2 = 1.0;
      if (outside > 0) {
        const double diff =
            std::abs((profile.total(u) - profile.total(v)) - stats.rated_prob_diff);
        s2 = std::exp(-params.gamma2 * diff / outside);
      }
      const double s3 = std::exp(-params.gamma3 * std::abs(bias_sum[u] - bias_sum[v]));
      out.combined.set(u, v, params.rho1 * s1 + params.rho2 * s2 + params.rho3 * s3);
      if (keep_components) {
        out.s1.set(u, v, s1);
        out.s2.set(u, v, s2);
        out.s3.set(u, v, s3);
      }
    }
  };

  if (jobs <= 1 || n < 4) {
    for (int u = 0; u < n; ++u) process_row(u);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (int t = 0; t < jobs; ++t)
      pool.emplace_back([&, t] {
        for (int u = t; u < n; u += jobs) process_row(u);
      });
    for (auto& th : pool) th.join();
  }
  return out;
}

inline SimilarityMatrix combined_similarity_matrix(const RatingMatrix& m,
                                                   const SimilarityParams& params, int jobs = 1) {
  return compute_similarities(m, params, jobs, /*keep_components=*/false).combined;
}

}  // namespace coldmap
