#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "coldmap/error.hpp"
#include "coldmap/rating_matrix.hpp"
#include "coldmap/rng.hpp"
#include "coldmap/similarity.hpp"
#include "coldmap/version.hpp"

namespace coldmap {

struct FactorModel {
  std::string domain_tag;
  int K = 0;
  Eigen::MatrixXd U;  // n_users x K
  Eigen::MatrixXd V;  // n_items x K

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = kFactorModelFormatVersion;
    j["domain_tag"] = domain_tag;
    j["K"] = K;
    auto rows_to_json = [](const Eigen::MatrixXd& m) {
      nlohmann::json rows = nlohmann::json::array();
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      return rows;
    };
    j["U"] = rows_to_json(U);
    j["V"] = rows_to_json(V);
    return j;
  }

  static FactorModel from_json(const nlohmann::json& j) {
    require(j.value("version", "") == kFactorModelFormatVersion,
            "factor model artifact has unsupported version tag");
    FactorModel model;
    model.domain_tag = j.at("domain_tag");
    model.K = j.at("K");
    auto rows_from_json = [&](const nlohmann::json& rows) {
      Eigen::MatrixXd m(rows.size(), model.K);
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const auto& row = rows.at(r);
        require(static_cast<int>(row.size()) == model.K, "factor model artifact: row width");
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row.at(c);
      }
      return m;
    };
    model.U = rows_from_json(j.at("U"));
    model.V = rows_from_json(j.at("V"));
    return model;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    out << to_json().dump() << "\n";
    require(out.good(), "write failed: " + path);
  }

  static FactorModel load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

struct MfusHyper {
  int K = 15;
  double alpha = 0.01;
  double beta = 0.005;
  int max_outer_iters = 500;
  double tol = 1e-5;       // relative objective decrease per sweep
  double ls_shrink = 0.5;  // backtracking factor
  double ls_c = 1e-4;      // Armijo constant
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    require(K >= 1, "mfus: K must be positive");
    require(alpha >= 0 && beta >= 0, "mfus: alpha and beta must be nonnegative");
    require(tol > 0, "mfus: tol must be positive");
    require(ls_shrink > 0 && ls_shrink < 1, "mfus: ls_shrink must be in (0,1)");
    require(ls_c > 0 && ls_c < 1, "mfus: ls_c must be in (0,1)");
    require(init_scale > 0, "mfus: init_scale must be positive");
    require(max_outer_iters >= 1, "mfus: max_outer_iters must be positive");
  }
};

// Graph Laplacian L = D - S of a similarity matrix, applied as D.*x - S*x.
// The diagonal of S is excluded from the degree sums (a self-loop contributes
// nothing to the pairwise penalty). S is expanded to a dense symmetric matrix
// with zero diagonal; fine at desk scale, where n stays in the thousands.
// TODO: thresholded sparse storage once user counts outgrow the dense form.
class Laplacian {
 public:
  explicit Laplacian(const SimilarityMatrix& s)
      : sym_(Eigen::MatrixXd::Zero(s.n_users(), s.n_users())), degree_(s.n_users()) {
    const int n = s.n_users();
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) {
        const double val = s.at(u, v);
        sym_(u, v) = val;
        sym_(v, u) = val;
      }
    degree_ = sym_.rowwise().sum();
  }

  int size() const { return static_cast<int>(sym_.rows()); }
  const Eigen::VectorXd& degree() const { return degree_; }

  // (D - S) x
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    return degree_.cwiseProduct(x) - sym_ * x;
  }

  double quad(const Eigen::VectorXd& x) const { return x.dot(apply(x)); }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd l = -sym_;
    l.diagonal() = degree_;
    return l;
  }

 private:
  Eigen::MatrixXd sym_;
  Eigen::VectorXd degree_;
};

inline Laplacian laplacian(const SimilarityMatrix& s) { return Laplacian(s); }

// 1/2 sum_ui Y (R - U_u . V_i)^2 + (alpha/2) tr(V V^T) + 1/2 tr[U^T (alpha I + beta L) U].
// S may be null when beta = 0.
inline double objective_value(const RatingMatrix& m, const FactorModel& model,
                              const SimilarityMatrix* s, const MfusHyper& hyper) {
  require(model.U.rows() == m.n_users() && model.V.rows() == m.n_items(),
          "objective_value: model dimensions do not match the rating matrix");
  require(model.U.cols() == model.V.cols(), "objective_value: U and V rank mismatch");
  double data = 0.0;
  for (int u = 0; u < m.n_users(); ++u)
    for (const auto& [i, r] : m.user_row(u)) {
      const double resid = static_cast<double>(r) - model.U.row(u).dot(model.V.row(i));
      data += resid * resid;
    }
  double obj = 0.5 * data + 0.5 * hyper.alpha * (model.V.squaredNorm() + model.U.squaredNorm());
  if (hyper.beta != 0.0) {
    require(s != nullptr && s->n_users() == m.n_users(),
            "objective_value: similarity matrix required when beta > 0");
    Laplacian lap(*s);
    double smooth = 0.0;
    for (int k = 0; k < model.K; ++k) smooth += lap.quad(model.U.col(k));
    obj += 0.5 * hyper.beta * smooth;
  }
  require(std::isfinite(obj), "objective_value: non-finite objective");
  return obj;
}

// d/dU_{*k} = (alpha I + beta L) U_{*k} - x,  x_u = sum_i Y (R - U_u . V_i) V_ik.
inline Eigen::VectorXd grad_user_column(const RatingMatrix& m, const FactorModel& model,
                                        const Laplacian* lap, const MfusHyper& hyper, int k) {
  require(k >= 0 && k < model.K, "grad_user_column: column out of range");
  const Eigen::VectorXd uk = model.U.col(k);
  Eigen::VectorXd g = hyper.alpha * uk;
  if (hyper.beta != 0.0) {
    require(lap != nullptr, "grad_user_column: Laplacian required when beta > 0");
    g += hyper.beta * lap->apply(uk);
  }
  for (int u = 0; u < m.n_users(); ++u) {
    double x = 0.0;
    for (const auto& [i, r] : m.user_row(u)) {
      const double resid = static_cast<double>(r) - model.U.row(u).dot(model.V.row(i));
      x += resid * model.V(i, k);
    }
    g[u] -= x;
  }
  return g;
}

// d/dV_{i*} = -sum_u Y (R - U_u . V_i) U_u + alpha V_{i*}.
inline Eigen::VectorXd grad_item_row(const RatingMatrix& m, const FactorModel& model,
                                     const MfusHyper& hyper, int i) {
  require(i >= 0 && i < m.n_items(), "grad_item_row: item out of range");
  Eigen::VectorXd g = hyper.alpha * model.V.row(i).transpose();
  for (const auto& [u, r] : m.item_col(i)) {
    const double resid = static_cast<double>(r) - model.U.row(u).dot(model.V.row(i));
    g -= resid * model.U.row(u).transpose();
  }
  return g;
}

// Armijo backtracking over t in {1, shrink, shrink^2, ...}.
// f_along(t) = f(point + t * direction) and slope = grad . direction < 0;
// returns the first t with f_along(t) <= f_along(0) + c * t * slope.
inline double backtracking_step(const std::function<double(double)>& f_along, double slope,
                                double shrink, double c, int max_halvings = 60) {
  require(slope < 0.0, "backtracking_step: not a descent direction");
  const double f0 = f_along(0.0);
  double t = 1.0;
  for (int it = 0; it <= max_halvings; ++it) {
    if (f_along(t) <= f0 + c * t * slope) return t;
    t *= shrink;
  }
  throw Error("backtracking_step: no admissible step found");
}

struct SweepLog {
  int sweep = 0;
  double objective = 0.0;
  double mean_step_u = 0.0;
  double mean_step_v = 0.0;
};

struct MfusTrainResult {
  FactorModel model;
  std::vector<SweepLog> log;  // log[0] is the initial objective

  void save_log_csv(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), "cannot open for writing: " + path);
    out << "sweep,objective,mean_step_u,mean_step_v\n";
    char buf[160];
    for (const auto& row : log) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.sweep, row.objective,
                    row.mean_step_u, row.mean_step_v);
      out << buf;
    }
  }
};

// Alternating gradient descent on the similarity-regularized objective: each
// sweep takes one Armijo-backtracked step along the negative gradient for
// every U column, then for every V row. Along such a ray the objective is an
// exact quadratic, so the line-search closure evaluates
//   f(t) - f(0) = t * slope + t^2/2 * curvature
// from cached residuals instead of re-scanning the matrix.
inline MfusTrainResult train_mfus(const RatingMatrix& m, const SimilarityMatrix* s,
                                  const MfusHyper& hyper, const std::string& domain_tag = "") {
  hyper.validate();
  const bool use_lap = hyper.beta != 0.0;
  if (use_lap)
    require(s != nullptr && s->n_users() == m.n_users(),
            "train_mfus: similarity matrix required when beta > 0");

  const int n = m.n_users(), n_items = m.n_items(), K = hyper.K;

  FactorModel model;
  model.domain_tag = domain_tag;
  model.K = K;
  model.U.resize(n, K);
  model.V.resize(n_items, K);
  {
    SeededRng rng(hyper.seed);
    for (int u = 0; u < n; ++u)
      for (int k = 0; k < K; ++k) model.U(u, k) = rng.uniform(0.0, hyper.init_scale);
    for (int i = 0; i < n_items; ++i)
      for (int k = 0; k < K; ++k) model.V(i, k) = rng.uniform(0.0, hyper.init_scale);
  }

  std::optional<Laplacian> lap;
  if (use_lap) lap.emplace(*s);

  // Entry triplets in canonical order plus per-item entry lists.
  std::vector<int> eu, ei;
  std::vector<double> er;
  eu.reserve(m.n_entries());
  ei.reserve(m.n_entries());
  er.reserve(m.n_entries());
  std::vector<std::vector<int>> item_entries(n_items);
  for (int u = 0; u < n; ++u)
    for (const auto& [i, r] : m.user_row(u)) {
      item_entries[i].push_back(static_cast<int>(eu.size()));
      eu.push_back(u);
      ei.push_back(i);
      er.push_back(static_cast<double>(r));
    }
  const std::size_t nnz = eu.size();

  std::vector<double> resid(nnz);
  for (std::size_t e = 0; e < nnz; ++e)
    resid[e] = er[e] - model.U.row(eu[e]).dot(model.V.row(ei[e]));

  auto current_objective = [&]() {
    double data = 0.0;
    for (std::size_t e = 0; e < nnz; ++e) data += resid[e] * resid[e];
    double obj = 0.5 * data + 0.5 * hyper.alpha * (model.U.squaredNorm() + model.V.squaredNorm());
    if (use_lap) {
      double smooth = 0.0;
      for (int k = 0; k < K; ++k) smooth += lap->quad(model.U.col(k));
      obj += 0.5 * hyper.beta * smooth;
    }
    require(std::isfinite(obj), "train_mfus: non-finite objective");
    return obj;
  };

  MfusTrainResult result;
  result.log.push_back({0, current_objective(), 0.0, 0.0});

  std::vector<double> coef(nnz);  // per-entry directional coefficients
  Eigen::VectorXd x(n), g(n);

  for (int sweep = 1; sweep <= hyper.max_outer_iters; ++sweep) {
    double step_sum_u = 0.0, step_sum_v = 0.0;
    int steps_u = 0, steps_v = 0;

    for (int k = 0; k < K; ++k) {
      x.setZero();
      for (std::size_t e = 0; e < nnz; ++e) x[eu[e]] += resid[e] * model.V(ei[e], k);
      g = hyper.alpha * model.U.col(k) - x;
      if (use_lap) g += hyper.beta * lap->apply(model.U.col(k));
      const double slope = -g.squaredNorm();
      if (slope == 0.0) continue;  // column already stationary
      const Eigen::VectorXd dir = -g;
      double curvature = hyper.alpha * dir.squaredNorm();
      if (use_lap) curvature += hyper.beta * lap->quad(dir);
      for (std::size_t e = 0; e < nnz; ++e) {
        coef[e] = dir[eu[e]] * model.V(ei[e], k);
        curvature += coef[e] * coef[e];
      }
      const double t = backtracking_step(
          [slope, curvature](double step) { return step * slope + 0.5 * step * step * curvature; },
          slope, hyper.ls_shrink, hyper.ls_c);
      model.U.col(k) += t * dir;
      for (std::size_t e = 0; e < nnz; ++e) resid[e] -= t * coef[e];
      step_sum_u += t;
      ++steps_u;
    }

    Eigen::VectorXd gv(K), dv(K);
    for (int i = 0; i < n_items; ++i) {
      gv = hyper.alpha * model.V.row(i).transpose();
      for (int e : item_entries[i]) gv -= resid[e] * model.U.row(eu[e]).transpose();
      const double slope = -gv.squaredNorm();
      if (slope == 0.0) continue;
      dv = -gv;
      double curvature = hyper.alpha * dv.squaredNorm();
      for (int e : item_entries[i]) {
        coef[e] = model.U.row(eu[e]).dot(dv);
        curvature += coef[e] * coef[e];
      }
      const double t = backtracking_step(
          [slope, curvature](double step) { return step * slope + 0.5 * step * step * curvature; },
          slope, hyper.ls_shrink, hyper.ls_c);
      model.V.row(i) += t * dv.transpose();
      for (int e : item_entries[i]) resid[e] -= t * coef[e];
      step_sum_v += t;
      ++steps_v;
    }

    const double obj = current_objective();
    result.log.push_back({sweep, obj, steps_u > 0 ? step_sum_u / steps_u : 0.0,
                          steps_v > 0 ? step_sum_v / steps_v : 0.0});
    const double prev = result.log[result.log.size() - 2].objective;
    const double rel = (prev - obj) / std::max(std::abs(prev), 1e-300);
    if (rel < hyper.tol) break;
  }

  result.model = std::move(model);
  return result;
}

// Reconstruction plus a reporting-only clamp to the rating scale.
inline double predict_rating(const FactorModel& model, int u, int i, bool clamp = false) {
  double r = model.U.row(u).dot(model.V.row(i));
  if (clamp) r = std::min(static_cast<double>(kMaxRating), std::max(static_cast<double>(kMinRating), r));
  return r;
}

}  // namespace coldmap
