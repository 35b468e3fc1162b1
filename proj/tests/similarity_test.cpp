#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "coldmap/rng.hpp"
#include "coldmap/similarity.hpp"

using namespace coldmap;

namespace {

RatingMatrix random_matrix(int n_users, int n_items, double density, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<RatingRecord> records;
  for (int u = 0; u < n_users; ++u) {
    std::set<int> items;
    const int count = std::max(1, static_cast<int>(density * n_items));
    while (static_cast<int>(items.size()) < count)
      items.insert(static_cast<int>(rng.bounded(n_items)));
    for (int i : items)
      records.push_back({"u" + std::to_string(u), "i" + std::to_string(i),
                         static_cast<int>(rng.bounded(5)) + 1, std::nullopt});
  }
  return build_rating_matrix(records);
}

// O(m) brute-force oracle for the second measure: sum P differences over the
// complement of the commonly rated set, item by item.
double s2_brute_force(const RatingMatrix& m, int u, int v, double gamma2, double sigma,
                      const RatedProbabilityMap& rated_map, int high_threshold) {
  int common = 0;
  double signed_sum = 0.0;
  for (int i = 0; i < m.n_items(); ++i) {
    const bool ru = m.rating(u, i).has_value();
    const bool rv = m.rating(v, i).has_value();
    if (ru && rv) {
      ++common;
      continue;
    }
    signed_sum += no_interest_probability(m, u, i, sigma, rated_map, high_threshold) -
                  no_interest_probability(m, v, i, sigma, rated_map, high_threshold);
  }
  const int outside = m.n_items() - common;
  if (outside == 0) return 1.0;
  return std::exp(-gamma2 * std::abs(signed_sum) / outside);
}

double s1_brute_force(const RatingMatrix& m, int u, int v, double gamma1) {
  int common = 0;
  double sq = 0.0;
  for (int i = 0; i < m.n_items(); ++i) {
    const auto ru = m.rating(u, i);
    const auto rv = m.rating(v, i);
    if (ru && rv) {
      ++common;
      const double d = *ru - *rv;
      sq += d * d;
    }
  }
  if (common == 0) return 0.0;
  return std::exp(-gamma1 * sq / common);
}

}  // namespace

TEST(CommonRatingSimilarity, IdenticalRatingsGiveOne) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u", "i1", 4, {}}, {"u", "i2", 2, {}}, {"v", "i1", 4, {}}, {"v", "i2", 2, {}}});
  EXPECT_DOUBLE_EQ(common_rating_similarity(m, 0, 1, 0.25), 1.0);
}

TEST(CommonRatingSimilarity, SinglePairClosedForm) {
  // D = (1-5)^2 = 16 over one common item, gamma1 = 1/4 -> exp(-4).
  const auto m = build_rating_matrix(
      std::vector<RatingRecord>{{"u", "i1", 1, {}}, {"v", "i1", 5, {}}});
  const double s = common_rating_similarity(m, 0, 1, 0.25);
  EXPECT_DOUBLE_EQ(s, std::exp(-4.0));
  EXPECT_NEAR(s, 0.018316, 1e-6);
}

TEST(CommonRatingSimilarity, NoCommonItemsGivesZero) {
  const auto m = build_rating_matrix(
      std::vector<RatingRecord>{{"u", "i1", 3, {}}, {"v", "i2", 3, {}}});
  EXPECT_DOUBLE_EQ(common_rating_similarity(m, 0, 1, 0.25), 0.0);
}

TEST(NoInterestProbability, RatedAnchors) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u", "i1", 1, {}}, {"u", "i2", 3, {}}, {"v", "i1", 2, {}}});
  EXPECT_DOUBLE_EQ(no_interest_probability(m, 0, 0, 6.0), 1.0);   // R = 1
  EXPECT_DOUBLE_EQ(no_interest_probability(m, 0, 1, 6.0), 0.5);   // R = 3
  EXPECT_DOUBLE_EQ(no_interest_probability(m, 1, 0, 6.0), 0.8);   // R = 2
}

TEST(NoInterestProbability, SaturatedUnratedBracket) {
  // f1 = 0 (user rated every item) and a fully rated, fully high-rated item:
  // the unrated branch evaluates to 1 - f3(1)^2.
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u", "i1", 5, {}}, {"u", "i2", 4, {}}, {"v", "i1", 5, {}}, {"v", "i2", 4, {}}});
  const NoInterestProfile profile(m, 6.0, kDefaultRatedMap, 4);
  const double f3_at_1 = f3_squash(1.0, 6.0);
  EXPECT_NEAR(f3_at_1, 0.995055, 1e-6);
  const double p = profile.unrated_probability(0, 0);
  EXPECT_DOUBLE_EQ(p, 1.0 - f3_at_1 * f3_at_1);
  EXPECT_NEAR(p, 0.009866, 1e-6);
}

TEST(NoInterestProbability, AlwaysInUnitInterval) {
  const auto m = random_matrix(8, 12, 0.3, 21);
  for (int u = 0; u < m.n_users(); ++u)
    for (int i = 0; i < m.n_items(); ++i) {
      const double p = no_interest_probability(m, u, i, 6.0);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
}

TEST(NoInterestSimilarity, SymmetricRolesCancelToOne) {
  // u rated only i1 with R=1, v rated only i2 with R=1: the signed sum over
  // the complement cancels exactly, so S = 1 despite opposite profiles.
  const auto m = build_rating_matrix(
      std::vector<RatingRecord>{{"u", "i1", 1, {}}, {"v", "i2", 1, {}}});
  const NoInterestProfile profile(m, 3.0, kDefaultRatedMap, 4);
  EXPECT_NEAR(no_interest_similarity(m, profile, 0, 1, 3.0), 1.0, 1e-15);
}

TEST(NoInterestSimilarity, PlantedFormulaAnchors) {
  // Scalar trace of the formula on planted P rows.
  // P_u = (1,1), P_v = (0,0), two items outside C: D = 2, S = exp(-3*2/2).
  const double d = std::abs((1.0 - 0.0) + (1.0 - 0.0));
  EXPECT_DOUBLE_EQ(std::exp(-3.0 * d / 2.0), std::exp(-3.0));
  EXPECT_NEAR(std::exp(-3.0), 0.049787, 1e-6);
  // P_u = (1,0), P_v = (0,1): the signed sum cancels and S = 1.
  EXPECT_DOUBLE_EQ(std::exp(-3.0 * std::abs((1.0 - 0.0) + (0.0 - 1.0)) / 2.0), 1.0);
}

TEST(NoInterestSimilarity, OptimizedMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto m = random_matrix(10, 20, 0.25, 100 + seed);
    const NoInterestProfile profile(m, 6.0, kDefaultRatedMap, 4);
    for (int u = 0; u < m.n_users(); ++u)
      for (int v = u + 1; v < m.n_users(); ++v) {
        const double fast = no_interest_similarity(m, profile, u, v, 3.0);
        const double slow = s2_brute_force(m, u, v, 3.0, 6.0, kDefaultRatedMap, 4);
        EXPECT_NEAR(fast, slow, 1e-12) << "pair " << u << "," << v << " seed " << seed;
      }
  }
}

TEST(NoInterestSimilarity, AllItemsCoRatedGivesOne) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u", "i1", 5, {}}, {"u", "i2", 1, {}}, {"v", "i1", 2, {}}, {"v", "i2", 3, {}}});
  const NoInterestProfile profile(m, 6.0, kDefaultRatedMap, 4);
  EXPECT_DOUBLE_EQ(no_interest_similarity(m, profile, 0, 1, 3.0), 1.0);
}

TEST(RatingBiasProfile, HandComputedTwoUsers) {
  // n = 2; u rated {5,5,4}, v rated {1,1}; base 2.
  const auto m = build_rating_matrix(std::vector<RatingRecord>{{"u", "i1", 5, {}},
                                                               {"u", "i2", 5, {}},
                                                               {"u", "i3", 4, {}},
                                                               {"v", "i4", 1, {}},
                                                               {"v", "i5", 1, {}}});
  const auto pu = rating_bias_profile(m, 0, 2.0);
  EXPECT_DOUBLE_EQ(pu[0], 0.0);
  EXPECT_DOUBLE_EQ(pu[1], 0.0);
  EXPECT_DOUBLE_EQ(pu[2], 0.0);
  EXPECT_NEAR(pu[3], 1.0 / 3.0, 1e-15);  // rf 1/3, log2(2/1) = 1
  EXPECT_NEAR(pu[4], 2.0 / 3.0, 1e-15);
  const auto pv = rating_bias_profile(m, 1, 2.0);
  EXPECT_DOUBLE_EQ(pv[0], 1.0);  // rf 1, log2(2/1) = 1

  // Opposite biases whose profile sums coincide: D = 0, S = 1.
  EXPECT_DOUBLE_EQ(rating_bias_similarity(m, 0, 1, 2.0, 2.0), 1.0);
}

TEST(RatingBiasProfile, UniqueScoreAmongFourUsers) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{{"a", "i1", 5, {}},
                                                               {"b", "i1", 3, {}},
                                                               {"c", "i2", 3, {}},
                                                               {"d", "i3", 2, {}}});
  const auto p = rating_bias_profile(m, 0, 2.0);
  EXPECT_DOUBLE_EQ(p[4], 2.0);  // rf 1, log2(4/1) = 2
}

TEST(RatingBiasProfile, SharedScoreKillsIdf) {
  // Every user used score 4 at least once -> log(n/n) = 0 for that component.
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"a", "i1", 4, {}}, {"b", "i2", 4, {}}, {"b", "i3", 5, {}}});
  EXPECT_DOUBLE_EQ(rating_bias_profile(m, 0, 2.0)[3], 0.0);
}

TEST(RatingBiasSimilarity, ScalarAnchor) {
  EXPECT_NEAR(std::exp(-2.0 * 0.5), std::exp(-1.0), 0.0);
  EXPECT_NEAR(std::exp(-1.0), 0.367879, 1e-6);
}

TEST(CombinedSimilarity, DegenerateWeightsEqualS1) {
  const auto m = random_matrix(8, 10, 0.4, 5);
  SimilarityParams params;
  params.rho1 = 1.0;
  params.rho2 = 0.0;
  params.rho3 = 0.0;
  const auto set = compute_similarities(m, params, 1, true);
  for (int u = 0; u < m.n_users(); ++u)
    for (int v = u + 1; v < m.n_users(); ++v)
      EXPECT_DOUBLE_EQ(set.combined.at(u, v), set.s1.at(u, v));
}

TEST(CombinedSimilarity, PaperDefaultWeightsValidate) {
  SimilarityParams params;  // rho = (0.6, 0.2, 0.2)
  EXPECT_NO_THROW(params.validate());
  EXPECT_DOUBLE_EQ(params.rho1 + params.rho2 + params.rho3, 1.0);
}

TEST(CombinedSimilarity, RangeSymmetryAndZeroDifferenceUnits) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto m = random_matrix(6, 8, 0.35, 300 + seed);
    const auto set = compute_similarities(m, SimilarityParams{}, 1, true);
    for (const auto* s : {&set.s1, &set.s2, &set.s3, &set.combined}) {
      for (int u = 0; u < m.n_users(); ++u) {
        EXPECT_DOUBLE_EQ(s->at(u, u), 1.0);
        for (int v = u + 1; v < m.n_users(); ++v) {
          const double val = s->at(u, v);
          EXPECT_GE(val, 0.0);
          EXPECT_LE(val, 1.0);
          EXPECT_DOUBLE_EQ(val, s->at(v, u));
        }
      }
    }
  }
}

TEST(CombinedSimilarity, ComponentsEqualOneAtZeroDifference) {
  // Clones with identical rating rows: D = 0 for all three measures.
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u", "i1", 4, {}}, {"u", "i2", 1, {}}, {"v", "i1", 4, {}}, {"v", "i2", 1, {}},
      {"w", "i1", 2, {}}});
  const auto set = compute_similarities(m, SimilarityParams{}, 1, true);
  EXPECT_DOUBLE_EQ(set.s1.at(0, 1), 1.0);
  EXPECT_NEAR(set.s2.at(0, 1), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(set.s3.at(0, 1), 1.0);
  EXPECT_NEAR(set.combined.at(0, 1), 1.0, 1e-15);
}

TEST(CombinedSimilarity, MonotoneInDifferenceOnSampledPairs) {
  const auto m = random_matrix(10, 15, 0.3, 77);
  SimilarityParams params;
  std::vector<std::pair<double, double>> d_s1;  // (mean sq diff, S1)
  for (int u = 0; u < m.n_users(); ++u)
    for (int v = u + 1; v < m.n_users(); ++v) {
      const double s1 = s1_brute_force(m, u, v, params.gamma1);
      if (s1 == 0.0) continue;
      d_s1.emplace_back(-std::log(s1) / params.gamma1, s1);
    }
  std::sort(d_s1.begin(), d_s1.end());
  for (std::size_t i = 1; i < d_s1.size(); ++i)
    EXPECT_LE(d_s1[i].second, d_s1[i - 1].second + 1e-12);
}

TEST(CombinedSimilarity, ParallelChunksMatchSequential) {
  const auto m = random_matrix(17, 12, 0.3, 900);
  const auto seq = compute_similarities(m, SimilarityParams{}, 1, true);
  const auto par = compute_similarities(m, SimilarityParams{}, 4, true);
  EXPECT_EQ(seq.combined.values(), par.combined.values());
  EXPECT_EQ(seq.s2.values(), par.s2.values());
}

TEST(CombinedSimilarity, SerializationRoundTrip) {
  const auto m = random_matrix(6, 9, 0.4, 42);
  const auto s = combined_similarity_matrix(m, SimilarityParams{});
  const auto j = s.to_json();
  EXPECT_EQ(j.at("version"), "coldmap-sim-v1");
  const auto back = SimilarityMatrix::from_json(j);
  EXPECT_EQ(back.values(), s.values());
  EXPECT_EQ(back.n_users(), s.n_users());
}

TEST(SimilarityParams, InvalidWeightsRejected) {
  SimilarityParams params;
  params.rho1 = 0.5;
  params.rho2 = 0.2;
  params.rho3 = 0.2;
  EXPECT_THROW(params.validate(), Error);
  params.rho3 = 0.3;
  EXPECT_NO_THROW(params.validate());
}
