#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coldmap/error.hpp"
#include "coldmap/rating_matrix.hpp"
#include "coldmap/rng.hpp"
#include "coldmap/split.hpp"

namespace coldmap {

// Desk-scale benchmark data with planted latent structure. Users live in
// behavior clusters (shared latent centers plus jitter); target-domain
// latents derive from auxiliary latents through a configurable cross-domain
// map; observed cells are sampled per user with preference-biased weights so
// rating behavior mirrors taste, as it does in transaction data.
struct SyntheticSpec {
  int n_linked = 400;
  int n_cold = 100;
  int n_items_target = 200;
  int n_items_aux = 200;
  int k_true = 5;
  enum class CrossMap { linear, piecewise, polynomial };
  CrossMap cross_map = CrossMap::piecewise;
  double noise_sd = 0.1;
  double density = 0.05;        // observed fraction of items per user, each domain
  int n_clusters = 8;
  double cluster_spread = 0.15; // user jitter around the cluster center
  double pref_sharpness = 1.5;  // weight exponent for preference-biased sampling
  double popular_fraction = 0.1;  // leading items forming the mainstream pool
  double popular_share = 0.5;     // share of each user's ratings drawn from that pool
  std::uint64_t seed = 0;

  void validate() const {
    require(n_linked >= 1 && n_cold >= 0, "synthetic: user counts must be positive");
    require(n_items_target >= 1 && n_items_aux >= 1, "synthetic: item counts must be positive");
    require(k_true >= 1, "synthetic: k_true must be positive");
    require(noise_sd >= 0, "synthetic: noise_sd must be nonnegative");
    require(density > 0 && density <= 1, "synthetic: density must be in (0,1]");
    require(n_clusters >= 1, "synthetic: n_clusters must be positive");
    require(cluster_spread >= 0, "synthetic: cluster_spread must be nonnegative");
  }
};

inline SyntheticSpec::CrossMap cross_map_from_string(const std::string& s) {
  if (s == "linear") return SyntheticSpec::CrossMap::linear;
  if (s == "piecewise") return SyntheticSpec::CrossMap::piecewise;
  if (s == "polynomial") return SyntheticSpec::CrossMap::polynomial;
  throw Error("unknown cross_map: " + s);
}

struct SyntheticData {
  DomainPair pair;  // every user has ratings in both domains
  std::vector<std::string> user_ids;
  std::vector<int> cluster_of;
  Eigen::MatrixXd true_user_aux, true_user_target;  // users x K
  Eigen::MatrixXd true_item_aux, true_item_target;  // items x K
};

namespace detail {

inline Eigen::MatrixXd cluster_user_factors(int n_users, int k, int n_clusters, double spread,
                                            std::vector<int>& cluster_of, SeededRng& rng) {
  // Centers come in +/- pairs so taste directions span the space
  // symmetrically: items loved by one cluster are disliked by its mirror.
  // Each pair also gets its own enthusiasm scale, so clusters differ in
  // rating level as well as direction. Both effects keep rating behavior
  // separable across clusters.
  Eigen::MatrixXd centers(n_clusters, k);
  const int n_pairs = (n_clusters + 1) / 2;
  for (int c = 0; c < n_clusters; c += 2) {
    const double scale =
        n_pairs > 1 ? 0.6 + 0.8 * (c / 2) / static_cast<double>(n_pairs - 1) : 1.0;
    for (int d = 0; d < k; ++d) centers(c, d) = scale * rng.uniform(-1.0, 1.0);
    if (c + 1 < n_clusters) centers.row(c + 1) = -centers.row(c);
  }
  Eigen::MatrixXd users(n_users, k);
  cluster_of.resize(n_users);
  for (int u = 0; u < n_users; ++u) {
    const int c = u % n_clusters;  // balanced assignment
    cluster_of[u] = c;
    for (int d = 0; d < k; ++d) users(u, d) = centers(c, d) + rng.uniform(-spread, spread);
  }
  return users;
}

inline Eigen::MatrixXd uniform_factors(int rows, int k, SeededRng& rng) {
  Eigen::MatrixXd m(rows, k);
  for (int r = 0; r < rows; ++r)
    for (int d = 0; d < k; ++d) m(r, d) = rng.uniform(-1.0, 1.0);
  return m;
}

// Affine-rescales raw scores to [1,5] and rounds half-up; a degenerate score
// range maps everything to 3.
inline int quantize_score(double score, double lo, double hi) {
  if (hi <= lo) return 3;
  const double scaled = 1.0 + 4.0 * (score - lo) / (hi - lo);
  const int r = static_cast<int>(std::floor(scaled + 0.5));
  return std::min(kMaxRating, std::max(kMinRating, r));
}

// Samples observed cells for every user and emits quantized records. Each
// user's quota splits into a mainstream part drawn uniformly from the
// popular pool (everyone rates the blockbusters, liked or not) and a
// preference-weighted part over the remaining items. Co-rated popular items
// therefore carry real cross-taste disagreement, as in transaction data.
// The rescale range clips to the 2nd/98th percentile of observed scores so
// the emitted ratings use the whole 1..5 scale.
inline void emit_domain_records(const Eigen::MatrixXd& users, const Eigen::MatrixXd& items,
                                const std::vector<std::string>& user_ids,
                                const std::string& item_prefix, double density,
                                double sharpness, double popular_fraction,
                                double popular_share, SeededRng& rng,
                                std::vector<RatingRecord>& out) {
  const int n_items = static_cast<int>(items.rows());
  const int n_popular = static_cast<int>(popular_fraction * n_items);
  const Eigen::MatrixXd scores = users * items.transpose();
  const auto per_user =
      std::min<std::size_t>(n_items, std::max<std::size_t>(
          2, static_cast<std::size_t>(std::llround(density * n_items))));

  std::vector<std::vector<std::size_t>> chosen(users.rows());
  std::vector<double> observed;
  for (Eigen::Index u = 0; u < users.rows(); ++u) {
    const auto want_pop = std::min<std::size_t>(
        n_popular, static_cast<std::size_t>(std::llround(popular_share * per_user)));
    std::vector<std::size_t>& picks = chosen[u];
    if (want_pop > 0) {
      for (auto i : rng.sample_indices(n_popular, want_pop)) picks.push_back(i);
    }
    const std::size_t n_rest = n_items - n_popular;
    const auto want_rest = std::min<std::size_t>(per_user - picks.size(), n_rest);
    if (want_rest > 0) {
      std::vector<double> weights(n_rest);
      for (std::size_t i = 0; i < n_rest; ++i)
        weights[i] = std::exp(sharpness * scores(u, static_cast<int>(n_popular + i)));
      for (auto i : rng.weighted_sample_indices(weights, want_rest))
        picks.push_back(n_popular + i);
    }
    std::sort(picks.begin(), picks.end());
    for (auto i : picks) observed.push_back(scores(u, static_cast<int>(i)));
  }
  std::sort(observed.begin(), observed.end());
  const auto quantile = [&](double q) {
    return observed[static_cast<std::size_t>(q * (observed.size() - 1))];
  };
  const double lo = quantile(0.02), hi = quantile(0.98);
  char item_id[32];
  for (Eigen::Index u = 0; u < users.rows(); ++u)
    for (auto i : chosen[u]) {
      std::snprintf(item_id, sizeof(item_id), "%s%04zu", item_prefix.c_str(), i);
      out.push_back({user_ids[u], item_id,
                     quantize_score(scores(u, static_cast<int>(i)), lo, hi), std::nullopt});
    }
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SeededRng rng(derive_seed(spec.seed, SeedModule::synthetic));
  const int n_users = spec.n_linked + spec.n_cold;
  const int k = spec.k_true;

  SyntheticData data;
  data.user_ids.resize(n_users);
  for (int u = 0; u < n_users; ++u) {
    char id[16];
    std::snprintf(id, sizeof(id), "u%05d", u);
    data.user_ids[u] = id;
  }

  data.true_user_aux = detail::cluster_user_factors(n_users, k, spec.n_clusters,
                                                    spec.cluster_spread, data.cluster_of, rng);

  // Cross-domain map: one matrix for linear, one per cluster for piecewise,
  // linear plus a per-dimension quadratic for polynomial.
  const int n_maps = spec.cross_map == SyntheticSpec::CrossMap::piecewise ? spec.n_clusters : 1;
  std::vector<Eigen::MatrixXd> maps(n_maps);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(k));
  for (auto& m : maps) {
    m.resize(k, k);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) m(r, c) = rng.uniform(-1.0, 1.0) * map_scale;
  }
  Eigen::VectorXd quad_coef = Eigen::VectorXd::Zero(k);
  if (spec.cross_map == SyntheticSpec::CrossMap::polynomial)
    for (int d = 0; d < k; ++d) quad_coef[d] = rng.uniform(-1.0, 1.0);

  data.true_user_target.resize(n_users, k);
  for (int u = 0; u < n_users; ++u) {
    const Eigen::VectorXd x = data.true_user_aux.row(u).transpose();
    Eigen::VectorXd y;
    switch (spec.cross_map) {
      case SyntheticSpec::CrossMap::linear: y = maps[0] * x; break;
      case SyntheticSpec::CrossMap::piecewise: y = maps[data.cluster_of[u]] * x; break;
      case SyntheticSpec::CrossMap::polynomial:
        y = maps[0] * x + quad_coef.cwiseProduct(x.cwiseProduct(x));
        break;
    }
    for (int d = 0; d < k; ++d) y[d] += spec.noise_sd * rng.gaussian();
    data.true_user_target.row(u) = y.transpose();
  }

  data.true_item_aux = detail::uniform_factors(spec.n_items_aux, k, rng);
  data.true_item_target = detail::uniform_factors(spec.n_items_target, k, rng);

  std::vector<RatingRecord> aux_records, tgt_records;
  detail::emit_domain_records(data.true_user_aux, data.true_item_aux, data.user_ids, "a",
                              spec.density, spec.pref_sharpness, spec.popular_fraction,
                              spec.popular_share, rng, aux_records);
  detail::emit_domain_records(data.true_user_target, data.true_item_target, data.user_ids, "t",
                              spec.density, spec.pref_sharpness, spec.popular_fraction,
                              spec.popular_share, rng, tgt_records);

  data.pair = make_domain_pair(RatingMatrix::from_records(tgt_records),
                               RatingMatrix::from_records(aux_records));
  return data;
}

// Single-domain variant used by the factorization parameter studies.
struct SingleDomainSpec {
  int n_users = 300;
  int n_items = 200;
  int k_true = 5;
  int n_clusters = 6;
  double density = 0.05;
  double cluster_spread = 0.15;
  double pref_sharpness = 1.5;
  double popular_fraction = 0.1;
  double popular_share = 0.5;
  std::uint64_t seed = 0;
};

struct SingleDomainData {
  RatingMatrix matrix;
  std::vector<std::string> user_ids;
  std::vector<int> cluster_of;
  Eigen::MatrixXd true_user, true_item;
};

inline SingleDomainData generate_synthetic_single(const SingleDomainSpec& spec) {
  SeededRng rng(derive_seed(spec.seed, SeedModule::synthetic));
  SingleDomainData data;
  data.user_ids.resize(spec.n_users);
  for (int u = 0; u < spec.n_users; ++u) {
    char id[16];
    std::snprintf(id, sizeof(id), "u%05d", u);
    data.user_ids[u] = id;
  }
  data.true_user = detail::cluster_user_factors(spec.n_users, spec.k_true, spec.n_clusters,
                                                spec.cluster_spread, data.cluster_of, rng);
  data.true_item = detail::uniform_factors(spec.n_items, spec.k_true, rng);
  std::vector<RatingRecord> records;
  detail::emit_domain_records(data.true_user, data.true_item, data.user_ids, "i", spec.density,
                              spec.pref_sharpness, spec.popular_fraction, spec.popular_share,
                              rng, records);
  data.matrix = RatingMatrix::from_records(records);
  return data;
}

}  // namespace coldmap
