#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "coldmap/gbt.hpp"
#include "coldmap/rng.hpp"

using namespace coldmap;

namespace {

// Exhaustive-split oracle: enumerates every (feature, midpoint threshold)
// candidate by brute force with the same validity and tie rules as the
// implementation, recursing on the winner. Predictions come from a plain
// recursive struct, not from RegressionTree.
struct OracleNode {
  bool leaf = true;
  double value = 0.0;
  int feature = -1;
  double threshold = 0.0;
  std::unique_ptr<OracleNode> left, right;

  double predict(const Eigen::RowVectorXd& row) const {
    if (leaf) return value;
    return row[feature] <= threshold ? left->predict(row) : right->predict(row);
  }
};

double subset_sse(const Eigen::VectorXd& y, const std::vector<int>& idx) {
  double sum = 0.0;
  for (int i : idx) sum += y[i];
  const double mean = sum / idx.size();
  double sse = 0.0;
  for (int i : idx) sse += (y[i] - mean) * (y[i] - mean);
  return sse;
}

std::unique_ptr<OracleNode> oracle_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       std::vector<int> idx, int depth, int max_depth,
                                       int min_leaf) {
  auto node = std::make_unique<OracleNode>();
  double sum = 0.0;
  for (int i : idx) sum += y[i];
  node->value = sum / idx.size();

  double lo = y[idx[0]], hi = y[idx[0]];
  for (int i : idx) {
    lo = std::min(lo, y[i]);
    hi = std::max(hi, y[i]);
  }
  if (depth >= max_depth || idx.size() < 2 * static_cast<std::size_t>(min_leaf) || lo == hi)
    return node;

  const double node_sse = subset_sse(y, idx);
  double best_score = std::numeric_limits<double>::infinity();
  int best_feature = -1;
  double best_threshold = 0.0;
  for (int f = 0; f < x.cols(); ++f) {
    std::vector<double> values;
    for (int i : idx) values.push_back(x(i, f));
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t j = 0; j + 1 < values.size(); ++j) {
      const double threshold = (values[j] + values[j + 1]) / 2.0;
      std::vector<int> left, right;
      for (int i : idx) (x(i, f) <= threshold ? left : right).push_back(i);
      if (left.size() < static_cast<std::size_t>(min_leaf) ||
          right.size() < static_cast<std::size_t>(min_leaf))
        continue;
      const double score = subset_sse(y, left) + subset_sse(y, right);
      if (score < best_score) {
        best_score = score;
        best_feature = f;
        best_threshold = threshold;
      }
    }
  }
  if (best_feature < 0 || best_score >= node_sse) return node;

  node->leaf = false;
  node->feature = best_feature;
  node->threshold = best_threshold;
  std::vector<int> left, right;
  for (int i : idx) (x(i, best_feature) <= best_threshold ? left : right).push_back(i);
  node->left = oracle_fit(x, y, left, depth + 1, max_depth, min_leaf);
  node->right = oracle_fit(x, y, right, depth + 1, max_depth, min_leaf);
  return node;
}

Eigen::MatrixXd step_x() {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  return x;
}

Eigen::VectorXd step_y() {
  Eigen::VectorXd y(4);
  y << 0, 0, 1, 1;
  return y;
}

double training_sse(const GbtModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  double sse = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double d = y[i] - model.predict(x.row(i));
    sse += d * d;
  }
  return sse;
}

}  // namespace

TEST(RegressionTree, ConstantTargetsGiveSingleLeaf) {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(3, 4.5);
  const auto tree = fit_regression_tree(x, y, 3, 1);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].value, 4.5);
}

TEST(RegressionTree, StepDataSplitsAtMidpoint) {
  const auto tree = fit_regression_tree(step_x(), step_y(), 1, 1);
  ASSERT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.nodes()[0].feature, 0);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].threshold, 1.5);
  Eigen::RowVectorXd probe(1);
  probe << 0.7;
  EXPECT_DOUBLE_EQ(tree.predict(probe), 0.0);
  probe << 2.2;
  EXPECT_DOUBLE_EQ(tree.predict(probe), 1.0);
  double sse = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double d = step_y()[i] - tree.predict(step_x().row(i));
    sse += d * d;
  }
  EXPECT_DOUBLE_EQ(sse, 0.0);
}

TEST(RegressionTree, SingleRowIsItsOwnLeaf) {
  Eigen::MatrixXd x(1, 2);
  x << 3, 4;
  Eigen::VectorXd y(1);
  y << 2.5;
  const auto tree = fit_regression_tree(x, y, 3, 1);
  ASSERT_EQ(tree.nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(tree.nodes()[0].value, 2.5);
}

TEST(RegressionTree, TieAtThresholdRoutesLeft) {
  const auto tree = fit_regression_tree(step_x(), step_y(), 1, 1);
  Eigen::RowVectorXd probe(1);
  probe << 1.5;  // exactly the threshold
  EXPECT_DOUBLE_EQ(tree.predict(probe), 0.0);
}

TEST(RegressionTree, MatchesExhaustiveOracleOnSmallSets) {
  SeededRng rng(1234);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + static_cast<int>(rng.bounded(7));   // N <= 8
    const int k = 1 + static_cast<int>(rng.bounded(2));   // K <= 2
    Eigen::MatrixXd x(n, k);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      for (int f = 0; f < k; ++f) x(i, f) = static_cast<double>(rng.bounded(6));
      y[i] = rng.uniform(-2.0, 2.0);
    }
    const int max_depth = 1 + static_cast<int>(rng.bounded(3));
    const int min_leaf = 1 + static_cast<int>(rng.bounded(2));
    const auto tree = fit_regression_tree(x, y, max_depth, min_leaf);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    const auto oracle = oracle_fit(x, y, idx, 0, max_depth, min_leaf);
    for (int i = 0; i < n; ++i)
      EXPECT_DOUBLE_EQ(tree.predict(x.row(i)), oracle->predict(x.row(i)))
          << "trial " << trial << " row " << i;
  }
}

TEST(RegressionTree, RowPermutationInvariant) {
  SeededRng rng(555);
  Eigen::MatrixXd x(8, 2);
  Eigen::VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = static_cast<double>(rng.bounded(5));
    x(i, 1) = rng.uniform(0.0, 1.0);
    y[i] = rng.uniform(-1.0, 1.0);
  }
  const auto tree = fit_regression_tree(x, y, 3, 1);
  std::vector<int> perm{5, 2, 7, 0, 3, 6, 1, 4};
  Eigen::MatrixXd xp(8, 2);
  Eigen::VectorXd yp(8);
  for (int i = 0; i < 8; ++i) {
    xp.row(i) = x.row(perm[i]);
    yp[i] = y[perm[i]];
  }
  const auto tree_p = fit_regression_tree(xp, yp, 3, 1);
  for (int i = 0; i < 8; ++i)
    EXPECT_DOUBLE_EQ(tree.predict(x.row(i)), tree_p.predict(x.row(i)));
}

TEST(FitGbt, ConstantTargetStopsAtInitialization) {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(3, 2.0);
  GbtHyper hyper;
  const auto model = fit_gbt(x, y, hyper);
  EXPECT_DOUBLE_EQ(model.f0, 2.0);
  EXPECT_TRUE(model.stages.empty());
  ASSERT_EQ(model.loss_log.size(), 1u);
  EXPECT_DOUBLE_EQ(model.loss_log[0], 0.0);
}

TEST(FitGbt, OneFullStrengthStageSolvesStepData) {
  GbtHyper hyper;
  hyper.nu = 1.0;
  hyper.max_depth = 1;
  hyper.min_leaf = 1;
  hyper.max_stages = 1;
  const auto model = fit_gbt(step_x(), step_y(), hyper);
  ASSERT_EQ(model.stages.size(), 1u);
  EXPECT_LT(training_sse(model, step_x(), step_y()), 1e-10);
}

TEST(FitGbt, ShrinkageScalesFirstStageExactly) {
  GbtHyper hyper;
  hyper.nu = 0.01;
  hyper.max_depth = 1;
  hyper.min_leaf = 1;
  hyper.max_stages = 1;
  const auto model = fit_gbt(step_x(), step_y(), hyper);
  ASSERT_EQ(model.stages.size(), 1u);
  Eigen::RowVectorXd probe(1);
  probe << 2.5;
  const double expected =
      model.f0 + 0.01 * model.stages[0].eta * model.stages[0].tree.predict(probe);
  EXPECT_DOUBLE_EQ(model.predict(probe), expected);
  EXPECT_DOUBLE_EQ(model.stages[0].eta, 1.0);
}

TEST(FitGbt, LossLogNonIncreasingBothPolicies) {
  SeededRng rng(42);
  Eigen::MatrixXd x(30, 3);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    for (int f = 0; f < 3; ++f) x(i, f) = rng.uniform(-1.0, 1.0);
    y[i] = std::sin(3 * x(i, 0)) + 0.5 * x(i, 1) + 0.1 * rng.gaussian();
  }
  for (auto policy : {GbtHyper::EtaPolicy::fixed_one, GbtHyper::EtaPolicy::exact_line_search}) {
    GbtHyper hyper;
    hyper.nu = 0.1;
    hyper.eta_policy = policy;
    hyper.max_stages = 100;
    const auto model = fit_gbt(x, y, hyper);
    ASSERT_GE(model.loss_log.size(), 2u);
    for (std::size_t i = 1; i < model.loss_log.size(); ++i)
      EXPECT_LE(model.loss_log[i], model.loss_log[i - 1]);
  }
}

TEST(FitGbt, FullCapacityDrivesSseToZero) {
  SeededRng rng(77);
  Eigen::MatrixXd x(10, 2);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = static_cast<double>(i);  // distinct feature rows
    x(i, 1) = rng.uniform(0.0, 1.0);
    y[i] = rng.uniform(-3.0, 3.0);
  }
  GbtHyper hyper;
  hyper.nu = 1.0;
  hyper.max_depth = 64;
  hyper.min_leaf = 1;
  hyper.max_stages = 10;
  hyper.tol = 1e-300;
  const auto model = fit_gbt(x, y, hyper);
  EXPECT_LT(training_sse(model, x, y), 1e-8);
  EXPECT_LE(model.stages.size(), 10u);
}

TEST(FitGbt, ExactLineSearchMatchesClosedForm) {
  SeededRng rng(31);
  Eigen::MatrixXd x(12, 1);
  Eigen::VectorXd y(12);
  for (int i = 0; i < 12; ++i) {
    x(i, 0) = static_cast<double>(i);
    y[i] = rng.uniform(0.0, 4.0);
  }
  GbtHyper hyper;
  hyper.nu = 0.5;
  hyper.eta_policy = GbtHyper::EtaPolicy::exact_line_search;
  hyper.max_stages = 1;
  const auto model = fit_gbt(x, y, hyper);
  ASSERT_EQ(model.stages.size(), 1u);
  // eta = sum(r h) / sum(h^2) with r the initial residuals
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 12; ++i) {
    const double h = model.stages[0].tree.predict(x.row(i));
    num += (y[i] - model.f0) * h;
    den += h * h;
  }
  EXPECT_NEAR(model.stages[0].eta, num / den, 1e-12);
}

TEST(GbtPredict, EmptyStagesReturnF0) {
  GbtModel model;
  model.f0 = 1.25;
  Eigen::RowVectorXd probe(3);
  probe << 1, 2, 3;
  EXPECT_DOUBLE_EQ(gbt_predict(model, probe), 1.25);
}

TEST(GbtPredict, DeterministicAcrossCalls) {
  GbtHyper hyper;
  hyper.nu = 0.3;
  hyper.max_stages = 20;
  const auto model = fit_gbt(step_x(), step_y(), hyper);
  Eigen::RowVectorXd probe(1);
  probe << 1.9;
  EXPECT_DOUBLE_EQ(model.predict(probe), model.predict(probe));
}

TEST(GbtModel, SerializationRoundTrip) {
  GbtHyper hyper;
  hyper.nu = 0.2;
  hyper.max_stages = 15;
  const auto model = fit_gbt(step_x(), step_y(), hyper);
  const auto j = model.to_json();
  EXPECT_EQ(j.at("version"), "coldmap-gbt-v1");
  const auto back = GbtModel::from_json(j);
  for (double t : {0.0, 0.5, 1.5, 2.5, 3.5}) {
    Eigen::RowVectorXd probe(1);
    probe << t;
    EXPECT_DOUBLE_EQ(back.predict(probe), model.predict(probe));
  }
}

TEST(FitGbt, EmptyInputRejected) {
  Eigen::MatrixXd x(0, 2);
  Eigen::VectorXd y(0);
  EXPECT_THROW(fit_gbt(x, y, GbtHyper{}), Error);
}
