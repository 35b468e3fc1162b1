#pragma once

#include <string>
#include <unordered_map>

#include <Eigen/Dense>

#include "coldmap/error.hpp"
#include "coldmap/mapping.hpp"
#include "coldmap/mfus.hpp"
#include "coldmap/rating_matrix.hpp"

namespace coldmap {

// Average Filling: global mean plus user and item biases; entities unseen in
// training get zero bias.
struct AfModel {
  double global_mean = 0.0;
  std::unordered_map<std::string, double> user_bias;
  std::unordered_map<std::string, double> item_bias;

  double predict(const std::string& user_id, const std::string& item_id) const {
    double r = global_mean;
    if (auto it = user_bias.find(user_id); it != user_bias.end()) r += it->second;
    if (auto it = item_bias.find(item_id); it != item_bias.end()) r += it->second;
    return r;
  }
};

inline AfModel average_filling(const RatingMatrix& train) {
  require(train.n_entries() > 0, "average_filling: empty training set");
  AfModel model;
  double total = 0.0;
  for (int u = 0; u < train.n_users(); ++u)
    for (const auto& [i, r] : train.user_row(u)) total += r;
  model.global_mean = total / static_cast<double>(train.n_entries());
  for (int u = 0; u < train.n_users(); ++u) {
    double sum = 0.0;
    for (const auto& [i, r] : train.user_row(u)) sum += r;
    model.user_bias[train.user_id(u)] =
        sum / train.user_rating_count(u) - model.global_mean;
  }
  for (int i = 0; i < train.n_items(); ++i) {
    double sum = 0.0;
    for (const auto& [u, r] : train.item_col(i)) sum += r;
    model.item_bias[train.item_id(i)] =
        sum / train.item_rating_count(i) - model.global_mean;
  }
  return model;
}

// Plain MF is the beta = 0 reduction of the similarity-regularized trainer;
// same code path, so identical seeds give identical models.
inline MfusTrainResult train_mf(const RatingMatrix& m, const MfusHyper& hyper,
                                const std::string& domain_tag = "mf") {
  MfusHyper reduced = hyper;
  reduced.beta = 0.0;
  return train_mfus(m, nullptr, reduced, domain_tag);
}

// Linear cross-domain map fitted by ridge least squares on linked-user
// latent feature pairs.
struct LinearMap {
  Eigen::MatrixXd m;  // K_t x K_a
  Eigen::VectorXd intercept;
  bool has_intercept = false;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::VectorXd y = m * x;
    if (has_intercept) y += intercept;
    return y;
  }
};

// Minimizes sum_v ||M a_v (+ c) - t_v||^2 + ridge ||M||_F^2 via the normal
// equations; the intercept, when enabled, is unpenalized. A singular system
// with ridge = 0 is an error advising ridge > 0.
inline LinearMap fit_transformation_matrix(const Eigen::MatrixXd& u_aux_rows,
                                           const Eigen::MatrixXd& u_tgt_rows, double ridge,
                                           bool intercept = false) {
  require(u_aux_rows.rows() >= 1, "fit_transformation_matrix: no linked pairs");
  require(u_aux_rows.rows() == u_tgt_rows.rows(),
          "fit_transformation_matrix: pair count mismatch");
  require(ridge >= 0, "fit_transformation_matrix: ridge must be nonnegative");

  const Eigen::Index n = u_aux_rows.rows(), ka = u_aux_rows.cols();
  Eigen::MatrixXd a = u_aux_rows;
  if (intercept) {
    a.conservativeResize(n, ka + 1);
    a.col(ka).setOnes();
  }
  Eigen::MatrixXd gram = a.transpose() * a;
  for (Eigen::Index d = 0; d < ka; ++d) gram(d, d) += ridge;
  const Eigen::MatrixXd rhs = a.transpose() * u_tgt_rows;

  Eigen::MatrixXd solution;  // (ka [+1]) x K_t
  if (ridge == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    require(lu.isInvertible(),
            "fit_transformation_matrix: singular system; use ridge > 0");
    solution = lu.solve(rhs);
  } else {
    solution = gram.ldlt().solve(rhs);
  }

  LinearMap map;
  map.has_intercept = intercept;
  map.m = solution.topRows(ka).transpose();
  if (intercept) map.intercept = solution.row(ka).transpose();
  return map;
}

// Global-mapping ablation: one mapping function trained on all linked users'
// latent feature pairs and reused for every cold-start user.
inline MappingFunction global_gbt_mapping(const Eigen::MatrixXd& u_aux_rows,
                                          const Eigen::MatrixXd& u_tgt_rows,
                                          const GbtHyper& hyper) {
  return train_user_mapping("__global__", u_aux_rows, u_tgt_rows, hyper);
}

}  // namespace coldmap
