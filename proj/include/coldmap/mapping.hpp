#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "coldmap/error.hpp"
#include "coldmap/gbt.hpp"
#include "coldmap/similarity.hpp"

namespace coldmap {

// Linked users selected as mapping-training neighbors for one cold-start
// user, ordered by (similarity desc, index asc). When no linked user clears
// the threshold, the top fallback_k by similarity are used and flagged.
struct NeighborSet {
  std::string owner;
  std::vector<int> members;  // auxiliary-domain user indices
  double threshold_used = 0.0;
  bool fallback_used = false;
};

inline NeighborSet select_neighbors(int u, const std::string& owner_id,
                                    const std::vector<int>& linked, const SimilarityMatrix& s_aux,
                                    double sim, int fallback_k) {
  require(!linked.empty(), "select_neighbors: no linked users");
  require(sim >= 0.0 && sim < 1.0, "select_neighbors: sim must lie in [0,1)");
  require(fallback_k >= 1, "select_neighbors: fallback_k must be positive");

  std::vector<std::pair<double, int>> scored;
  scored.reserve(linked.size());
  for (int v : linked) scored.emplace_back(s_aux.at(u, v), v);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  NeighborSet out;
  out.owner = owner_id;
  out.threshold_used = sim;
  for (const auto& [score, v] : scored) {
    if (score > sim)
      out.members.push_back(v);
    else
      break;
  }
  if (out.members.empty()) {
    out.fallback_used = true;
    const auto k = std::min<std::size_t>(fallback_k, scored.size());
    for (std::size_t j = 0; j < k; ++j) out.members.push_back(scored[j].second);
  }
  return out;
}

// Per-dimension GBT ensembles mapping auxiliary latent vectors to one
// target-domain latent dimension each.
struct MappingFunction {
  std::string owner;
  std::vector<GbtModel> subfunctions;  // size K_t
  int neighbor_count = 0;

  int target_dim() const { return static_cast<int>(subfunctions.size()); }
};

// x: |N| x K_a auxiliary features of the neighbors; y: |N| x K_t target
// features of the same users in the same row order.
inline MappingFunction train_user_mapping(const std::string& owner, const Eigen::MatrixXd& x,
                                          const Eigen::MatrixXd& y, const GbtHyper& hyper) {
  require(x.rows() >= 1, "train_user_mapping: empty neighborhood");
  require(x.rows() == y.rows(), "train_user_mapping: feature pair count mismatch");
  MappingFunction fn;
  fn.owner = owner;
  fn.neighbor_count = static_cast<int>(x.rows());
  fn.subfunctions.reserve(y.cols());
  for (Eigen::Index k = 0; k < y.cols(); ++k) fn.subfunctions.push_back(fit_gbt(x, y.col(k), hyper));
  return fn;
}

inline Eigen::VectorXd map_features(const MappingFunction& fn, const Eigen::RowVectorXd& u_aux) {
  Eigen::VectorXd mapped(fn.target_dim());
  for (int k = 0; k < fn.target_dim(); ++k) mapped[k] = fn.subfunctions[k].predict(u_aux);
  return mapped;
}

// r_hat = V^t u^T over all target items.
inline Eigen::VectorXd predict_ratings(const Eigen::VectorXd& u_mapped,
                                       const Eigen::MatrixXd& v_target) {
  require(v_target.cols() == u_mapped.size(), "predict_ratings: dimension mismatch");
  return v_target * u_mapped;
}

}  // namespace coldmap
