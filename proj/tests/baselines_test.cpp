#include <gtest/gtest.h>

#include <set>

#include "coldmap/baselines.hpp"
#include "coldmap/rng.hpp"

using namespace coldmap;

namespace {

RatingMatrix random_matrix(int n_users, int n_items, double density, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<RatingRecord> records;
  for (int i = 0; i < n_items; ++i)
    records.push_back({"u" + std::to_string(i % n_users), "i" + std::to_string(i),
                       static_cast<int>(rng.bounded(5)) + 1, std::nullopt});
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

}  // namespace

TEST(AverageFilling, SingleRatingDegenerates) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{{"u1", "i1", 4, {}}});
  const auto af = average_filling(m);
  EXPECT_DOUBLE_EQ(af.global_mean, 4.0);
  EXPECT_DOUBLE_EQ(af.predict("u1", "i1"), 4.0);
  EXPECT_DOUBLE_EQ(af.predict("nobody", "nothing"), 4.0);
}

TEST(AverageFilling, HandComputedToy) {
  // mu = 3, b_u1 = 2, b_u2 = -1, b_i1 = 1, b_i2 = -2; predict(u1,i2) = 3.
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u1", "i1", 5, {}}, {"u2", "i1", 3, {}}, {"u2", "i2", 1, {}}});
  const auto af = average_filling(m);
  EXPECT_DOUBLE_EQ(af.global_mean, 3.0);
  EXPECT_DOUBLE_EQ(af.user_bias.at("u1"), 2.0);
  EXPECT_DOUBLE_EQ(af.user_bias.at("u2"), -1.0);
  EXPECT_DOUBLE_EQ(af.item_bias.at("i1"), 1.0);
  EXPECT_DOUBLE_EQ(af.item_bias.at("i2"), -2.0);
  EXPECT_DOUBLE_EQ(af.predict("u1", "i2"), 3.0);
}

TEST(AverageFilling, ColdUserFallsBackToItemBias) {
  const auto m = build_rating_matrix(std::vector<RatingRecord>{
      {"u1", "i1", 5, {}}, {"u2", "i1", 3, {}}, {"u2", "i2", 1, {}}});
  const auto af = average_filling(m);
  EXPECT_DOUBLE_EQ(af.predict("coldie", "i1"), af.global_mean + af.item_bias.at("i1"));
}

TEST(AverageFilling, DecomposesComponentwise) {
  const auto m = random_matrix(6, 8, 0.4, 19);
  const auto af = average_filling(m);
  for (int u = 0; u < m.n_users(); ++u)
    for (int i = 0; i < m.n_items(); ++i)
      EXPECT_DOUBLE_EQ(af.predict(m.user_id(u), m.item_id(i)),
                       af.global_mean + af.user_bias.at(m.user_id(u)) +
                           af.item_bias.at(m.item_id(i)));
}

TEST(TrainMf, BitwiseEqualToMfusBetaZero) {
  const auto m = random_matrix(6, 5, 0.5, 23);
  MfusHyper hyper;
  hyper.K = 3;
  hyper.alpha = 0.02;
  hyper.beta = 0.7;  // train_mf must override this to 0
  hyper.max_outer_iters = 60;
  hyper.seed = 77;
  const auto mf = train_mf(m, hyper, "tag");
  MfusHyper zero = hyper;
  zero.beta = 0.0;
  const auto mfus = train_mfus(m, nullptr, zero, "tag");
  EXPECT_TRUE((mf.model.U.array() == mfus.model.U.array()).all());
  EXPECT_TRUE((mf.model.V.array() == mfus.model.V.array()).all());
  ASSERT_EQ(mf.log.size(), mfus.log.size());
  for (std::size_t i = 0; i < mf.log.size(); ++i)
    EXPECT_DOUBLE_EQ(mf.log[i].objective, mfus.log[i].objective);
}

TEST(TrainMf, MonotoneObjectiveOnToy) {
  const auto m = random_matrix(3, 3, 0.8, 29);
  MfusHyper hyper;
  hyper.K = 2;
  hyper.max_outer_iters = 100;
  hyper.seed = 5;
  const auto result = train_mf(m, hyper);
  for (std::size_t i = 1; i < result.log.size(); ++i)
    EXPECT_LE(result.log[i].objective, result.log[i - 1].objective * (1 + 1e-12) + 1e-12);
}

TEST(TransformationMatrix, RecoversPlantedLinearMap) {
  SeededRng rng(41);
  const int ka = 4, kt = 3, n = 40;
  Eigen::MatrixXd planted(kt, ka);
  for (int r = 0; r < kt; ++r)
    for (int c = 0; c < ka; ++c) planted(r, c) = rng.uniform(-1, 1);
  Eigen::MatrixXd x(n, ka), y(n, kt);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < ka; ++c) x(i, c) = rng.uniform(-1, 1);
    y.row(i) = (planted * x.row(i).transpose()).transpose();
  }
  const auto map = fit_transformation_matrix(x, y, 0.0);
  EXPECT_LT((map.m - planted).norm(), 1e-8);
}

TEST(TransformationMatrix, NormalEquationResidualNearZero) {
  SeededRng rng(43);
  const int ka = 3, kt = 2, n = 12;
  Eigen::MatrixXd x(n, ka), y(n, kt);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < ka; ++c) x(i, c) = rng.uniform(-1, 1);
    for (int c = 0; c < kt; ++c) y(i, c) = rng.uniform(-1, 1);
  }
  const double ridge = 0.3;
  const auto map = fit_transformation_matrix(x, y, ridge);
  // gradient of the ridge objective at the solution: M (X^T X + ridge I) - Y^T X = 0
  const Eigen::MatrixXd grad =
      map.m * (x.transpose() * x + ridge * Eigen::MatrixXd::Identity(ka, ka)) -
      y.transpose() * x;
  EXPECT_LT(grad.norm(), 1e-8);
}

TEST(TransformationMatrix, SinglePairRegularizedMinimizer) {
  Eigen::MatrixXd x(1, 2), y(1, 2);
  x << 1.0, 2.0;
  y << 3.0, -1.0;
  const auto map = fit_transformation_matrix(x, y, 0.5);
  const Eigen::MatrixXd grad =
      map.m * (x.transpose() * x + 0.5 * Eigen::MatrixXd::Identity(2, 2)) - y.transpose() * x;
  EXPECT_LT(grad.norm(), 1e-10);
}

TEST(TransformationMatrix, IdentityWhenDomainsCoincide) {
  SeededRng rng(47);
  const int k = 3, n = 20;
  Eigen::MatrixXd x(n, k);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < k; ++c) x(i, c) = rng.uniform(-1, 1);
  const auto map = fit_transformation_matrix(x, x, 0.0);
  EXPECT_TRUE(map.m.isApprox(Eigen::MatrixXd::Identity(k, k), 1e-10));
}

TEST(TransformationMatrix, SingularWithoutRidgeFails) {
  Eigen::MatrixXd x(1, 3), y(1, 2);  // rank-1 gram, singular at ridge 0
  x << 1, 2, 3;
  y << 1, 1;
  EXPECT_THROW(fit_transformation_matrix(x, y, 0.0), Error);
  EXPECT_NO_THROW(fit_transformation_matrix(x, y, 1e-6));
}

TEST(TransformationMatrix, NonlinearMapLeavesResidual) {
  // A planted quadratic map defeats the linear fit while per-dimension GBT
  // drives training error near zero: the ablation discriminator.
  SeededRng rng(53);
  const int k = 2, n = 60;
  Eigen::MatrixXd x(n, k), y(n, k);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) x(i, c) = rng.uniform(-1, 1);
    y(i, 0) = x(i, 0) * x(i, 0);  // even function: linear fit is helpless
    y(i, 1) = std::abs(x(i, 1));
  }
  const auto map = fit_transformation_matrix(x, y, 0.0);
  double linear_sse = 0.0;
  for (int i = 0; i < n; ++i)
    linear_sse += (map.apply(x.row(i).transpose()) - y.row(i).transpose()).squaredNorm();

  GbtHyper hyper;
  hyper.nu = 0.5;
  hyper.max_stages = 200;
  hyper.min_leaf = 1;
  const auto fn = global_gbt_mapping(x, y, hyper);
  double gbt_sse = 0.0;
  for (int i = 0; i < n; ++i)
    gbt_sse += (map_features(fn, x.row(i)) - y.row(i).transpose()).squaredNorm();
  EXPECT_GT(linear_sse, 1.0);
  EXPECT_LT(gbt_sse, 0.05 * linear_sse);
}

TEST(GlobalGbtMapping, ConstantTargetsGiveConstantSubfunctions) {
  Eigen::MatrixXd x(5, 2);
  x.setRandom();
  Eigen::MatrixXd y = Eigen::MatrixXd::Constant(5, 3, 0.7);
  const auto fn = global_gbt_mapping(x, y, GbtHyper{});
  Eigen::RowVectorXd probe(2);
  probe << 4, -4;
  const Eigen::VectorXd mapped = map_features(fn, probe);
  for (int kk = 0; kk < 3; ++kk) EXPECT_DOUBLE_EQ(mapped[kk], 0.7);
}

TEST(GlobalGbtMapping, EqualsPerUserMappingOnSameTrainingSet) {
  SeededRng rng(61);
  Eigen::MatrixXd x(7, 3), y(7, 2);
  for (int r = 0; r < 7; ++r) {
    for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform01();
    for (int c = 0; c < 2; ++c) y(r, c) = rng.uniform01();
  }
  GbtHyper hyper;
  hyper.nu = 0.2;
  hyper.max_stages = 40;
  const auto global = global_gbt_mapping(x, y, hyper);
  const auto per_user = train_user_mapping("u9", x, y, hyper);
  Eigen::RowVectorXd probe(3);
  probe << 0.2, 0.8, 0.5;
  EXPECT_DOUBLE_EQ(map_features(global, probe)[0], map_features(per_user, probe)[0]);
  EXPECT_DOUBLE_EQ(map_features(global, probe)[1], map_features(per_user, probe)[1]);
}
