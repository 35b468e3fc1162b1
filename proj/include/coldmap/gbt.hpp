#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "coldmap/error.hpp"
#include "coldmap/version.hpp"

namespace coldmap {

// Binary CART regression tree in a flat node array (root at 0). Internal
// nodes route x[feature] <= threshold to the left; leaves carry the mean of
// their training targets.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    bool is_leaf() const { return left < 0; }
  };

  // Greedy top-down growth minimizing the summed squared error of the two
  // children. Thresholds are midpoints between consecutive distinct sorted
  // feature values; equal-score ties resolve to the lowest feature index,
  // then the lowest threshold; a node splits only if it strictly reduces SSE.
  static RegressionTree fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_depth,
                            int min_leaf) {
    require(x.rows() >= 1, "fit_regression_tree: empty input");
    require(x.rows() == y.size(), "fit_regression_tree: row/target count mismatch");
    require(max_depth >= 1 && min_leaf >= 1, "fit_regression_tree: invalid capacity limits");
    RegressionTree tree;
    tree.max_depth_ = max_depth;
    std::vector<int> idx(x.rows());
    std::iota(idx.begin(), idx.end(), 0);
    tree.grow(x, y, idx, 0, max_depth, min_leaf);
    return tree;
  }

  double predict(const Eigen::RowVectorXd& row) const {
    int node = 0;
    while (!nodes_[node].is_leaf()) {
      const auto& nd = nodes_[node];
      node = row[nd.feature] <= nd.threshold ? nd.left : nd.right;
    }
    return nodes_[node].value;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  int max_depth() const { return max_depth_; }

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& nd : nodes_) {
      if (nd.is_leaf())
        arr.push_back({{"value", nd.value}});
      else
        arr.push_back({{"feature", nd.feature},
                       {"threshold", nd.threshold},
                       {"left", nd.left},
                       {"right", nd.right}});
    }
    return arr;
  }

  static RegressionTree from_json(const nlohmann::json& arr) {
    RegressionTree tree;
    for (const auto& j : arr) {
      Node nd;
      if (j.contains("value")) {
        nd.value = j.at("value");
      } else {
        nd.feature = j.at("feature");
        nd.threshold = j.at("threshold");
        nd.left = j.at("left");
        nd.right = j.at("right");
      }
      tree.nodes_.push_back(nd);
    }
    require(!tree.nodes_.empty(), "tree artifact: empty node array");
    return tree;
  }

 private:
  struct SplitChoice {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
    double score = std::numeric_limits<double>::infinity();
  };

  int grow(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& idx,
           int depth, int max_depth, int min_leaf) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    const auto n = idx.size();
    double sum = 0.0;
    double lo = y[idx[0]], hi = y[idx[0]];
    for (int i : idx) {
      sum += y[i];
      lo = std::min(lo, y[i]);
      hi = std::max(hi, y[i]);
    }
    const double mean = sum / static_cast<double>(n);

    const bool can_split = depth < max_depth && n >= 2 * static_cast<std::size_t>(min_leaf) &&
                           lo != hi;
    SplitChoice best;
    if (can_split) best = find_best_split(x, y, idx, min_leaf);

    if (!best.found) {
      nodes_[node_id].value = mean;
      return node_id;
    }

    std::vector<int> left_idx, right_idx;
    left_idx.reserve(n);
    right_idx.reserve(n);
    for (int i : idx)
      (x(i, best.feature) <= best.threshold ? left_idx : right_idx).push_back(i);

    nodes_[node_id].feature = best.feature;
    nodes_[node_id].threshold = best.threshold;
    const int left = grow(x, y, left_idx, depth + 1, max_depth, min_leaf);
    const int right = grow(x, y, right_idx, depth + 1, max_depth, min_leaf);
    nodes_[node_id].left = left;
    nodes_[node_id].right = right;
    return node_id;
  }

  static SplitChoice find_best_split(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                     const std::vector<int>& idx, int min_leaf) {
    const auto n = idx.size();
    double sum = 0.0, sumsq = 0.0;
    for (int i : idx) {
      sum += y[i];
      sumsq += y[i] * y[i];
    }
    const double node_sse = sumsq - sum * sum / static_cast<double>(n);

    SplitChoice best;
    std::vector<std::pair<double, double>> col(n);  // (feature value, target)
    for (int f = 0; f < x.cols(); ++f) {
      for (std::size_t j = 0; j < n; ++j) col[j] = {x(idx[j], f), y[idx[j]]};
      std::sort(col.begin(), col.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t j = 0; j + 1 < n; ++j) {
        left_sum += col[j].second;
        left_sq += col[j].second * col[j].second;
        if (col[j].first == col[j + 1].first) continue;  // no boundary here
        const auto n_left = j + 1;
        const auto n_right = n - n_left;
        if (n_left < static_cast<std::size_t>(min_leaf) ||
            n_right < static_cast<std::size_t>(min_leaf))
          continue;
        const double right_sum = sum - left_sum;
        const double right_sq = sumsq - left_sq;
        const double score = (left_sq - left_sum * left_sum / static_cast<double>(n_left)) +
                             (right_sq - right_sum * right_sum / static_cast<double>(n_right));
        if (score < best.score) {
          best.found = true;
          best.feature = f;
          best.threshold = (col[j].first + col[j + 1].first) / 2.0;
          best.score = score;
        }
      }
    }
    if (best.found && best.score >= node_sse) best.found = false;
    return best;
  }

  std::vector<Node> nodes_;
  int max_depth_ = 0;
};

inline RegressionTree fit_regression_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          int max_depth, int min_leaf) {
  return RegressionTree::fit(x, y, max_depth, min_leaf);
}

inline double tree_predict(const RegressionTree& tree, const Eigen::RowVectorXd& row) {
  return tree.predict(row);
}

struct GbtHyper {
  double nu = 0.01;  // shrinkage
  enum class EtaPolicy { fixed_one, exact_line_search };
  EtaPolicy eta_policy = EtaPolicy::fixed_one;
  int max_stages = 500;
  double tol = 1e-6;  // relative training-loss decrease
  int max_depth = 3;
  int min_leaf = 2;
  std::uint64_t seed = 0;  // reserved; fitting is deterministic

  void validate() const {
    require(nu > 0 && nu <= 1, "gbt: nu must be in (0,1]");
    require(max_stages >= 0, "gbt: max_stages must be nonnegative");
    require(tol > 0, "gbt: tol must be positive");
    require(max_depth >= 1 && min_leaf >= 1, "gbt: invalid tree capacity");
  }
};

inline const char* to_string(GbtHyper::EtaPolicy p) {
  return p == GbtHyper::EtaPolicy::fixed_one ? "fixed_one" : "exact_line_search";
}

struct GbtStage {
  RegressionTree tree;
  double eta = 1.0;
};

// Stagewise model f(x) = f0 + sum_m nu * eta_m * tree_m(x); loss_log holds
// the training SSE after initialization and after each stage.
struct GbtModel {
  double f0 = 0.0;
  double nu = 1.0;
  std::vector<GbtStage> stages;
  std::vector<double> loss_log;

  double predict(const Eigen::RowVectorXd& row) const {
    double value = f0;
    for (const auto& stage : stages) value += nu * stage.eta * stage.tree.predict(row);
    return value;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kGbtFormatVersion;
    j["f0"] = f0;
    j["nu"] = nu;
    auto& stages_json = j["stages"] = nlohmann::json::array();
    for (const auto& stage : stages)
      stages_json.push_back({{"eta", stage.eta}, {"tree", stage.tree.to_json()}});
    return j;
  }

  static GbtModel from_json(const nlohmann::json& j) {
    require(j.value("version", "") == kGbtFormatVersion,
            "gbt artifact has unsupported version tag");
    GbtModel model;
    model.f0 = j.at("f0");
    model.nu = j.at("nu");
    for (const auto& s : j.at("stages"))
      model.stages.push_back({RegressionTree::from_json(s.at("tree")), s.at("eta")});
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    out << to_json().dump() << "\n";
    require(out.good(), "write failed: " + path);
  }

  static GbtModel load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

// Squared-error gradient boosting: start from the target mean, then per stage
// fit a tree to the residuals (the negative gradient), scale it by nu * eta,
// and stop once the relative loss decrease falls under tol, the loss reaches
// zero, or max_stages is hit.
inline GbtModel fit_gbt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const GbtHyper& hyper) {
  hyper.validate();
  require(x.rows() >= 1, "fit_gbt: empty input");
  require(x.rows() == y.size(), "fit_gbt: row/target count mismatch");

  const auto n = x.rows();
  GbtModel model;
  model.nu = hyper.nu;
  model.f0 = y.mean();

  Eigen::VectorXd fitted = Eigen::VectorXd::Constant(n, model.f0);
  Eigen::VectorXd residual = y - fitted;
  double loss = residual.squaredNorm();
  require(std::isfinite(loss), "fit_gbt: non-finite loss");
  model.loss_log.push_back(loss);
  if (loss == 0.0) return model;

  Eigen::VectorXd stage_pred(n);
  for (int m = 0; m < hyper.max_stages; ++m) {
    RegressionTree tree = RegressionTree::fit(x, residual, hyper.max_depth, hyper.min_leaf);
    for (Eigen::Index i = 0; i < n; ++i) stage_pred[i] = tree.predict(x.row(i));
    const double denom = stage_pred.squaredNorm();
    if (denom == 0.0) break;  // tree carries no signal; no further progress possible

    double eta = 1.0;
    if (hyper.eta_policy == GbtHyper::EtaPolicy::exact_line_search)
      eta = residual.dot(stage_pred) / denom;

    fitted += hyper.nu * eta * stage_pred;
    residual = y - fitted;
    const double new_loss = residual.squaredNorm();
    require(std::isfinite(new_loss), "fit_gbt: non-finite loss");
    model.stages.push_back({std::move(tree), eta});
    model.loss_log.push_back(new_loss);

    const double rel = (loss - new_loss) / std::max(loss, 1e-300);
    loss = new_loss;
    if (loss == 0.0 || rel < hyper.tol) break;
  }
  return model;
}

inline double gbt_predict(const GbtModel& model, const Eigen::RowVectorXd& row) {
  return model.predict(row);
}

}  // namespace coldmap
