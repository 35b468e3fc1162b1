#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "coldmap/baselines.hpp"
#include "coldmap/config.hpp"
#include "coldmap/error.hpp"
#include "coldmap/mapping.hpp"
#include "coldmap/mfus.hpp"
#include "coldmap/similarity.hpp"
#include "coldmap/split.hpp"

namespace coldmap {

// Dense prediction block over cold-start users x target items; rows follow
// the sorted cold-user id order, columns the target item vocabulary.
struct PredictionTable {
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  Eigen::MatrixXd values;
  std::unordered_map<std::string, int> user_pos;
  std::unordered_map<std::string, int> item_pos;

  std::optional<double> at(const std::string& user_id, const std::string& item_id) const {
    auto u = user_pos.find(user_id);
    auto i = item_pos.find(item_id);
    if (u == user_pos.end() || i == item_pos.end()) return std::nullopt;
    return values(u->second, i->second);
  }
};

// Expensive shared artifacts for one training pair, computed on first use so
// several methods can be evaluated against the same split without retraining.
class PipelineArtifacts {
 public:
  PipelineArtifacts(const DomainPair& train, const ExperimentConfig& cfg)
      : train_(&train), cfg_(&cfg) {}

  const SimilarityMatrix& s_aux() {
    if (!s_aux_)
      s_aux_ = combined_similarity_matrix(train_->auxiliary, cfg_->sim_aux, cfg_->jobs);
    return *s_aux_;
  }
  const SimilarityMatrix& s_target() {
    if (!s_target_)
      s_target_ = combined_similarity_matrix(train_->target, cfg_->sim_target, cfg_->jobs);
    return *s_target_;
  }

  const MfusTrainResult& mfus_target() {
    if (!mfus_target_) {
      const SimilarityMatrix* s = cfg_->mfus_target.beta != 0.0 ? &s_target() : nullptr;
      mfus_target_ = train_mfus(train_->target, s, cfg_->mfus_target, "target");
    }
    return *mfus_target_;
  }
  const MfusTrainResult& mfus_aux() {
    if (!mfus_aux_) {
      const SimilarityMatrix* s = cfg_->mfus_aux.beta != 0.0 ? &s_aux() : nullptr;
      mfus_aux_ = train_mfus(train_->auxiliary, s, cfg_->mfus_aux, "auxiliary");
    }
    return *mfus_aux_;
  }

  const MfusTrainResult& mf_target() {
    if (!mf_target_) mf_target_ = train_mf(train_->target, cfg_->mfus_target, "target");
    return *mf_target_;
  }
  const MfusTrainResult& mf_aux() {
    if (!mf_aux_) mf_aux_ = train_mf(train_->auxiliary, cfg_->mfus_aux, "auxiliary");
    return *mf_aux_;
  }

  const DomainPair& train() const { return *train_; }
  const ExperimentConfig& cfg() const { return *cfg_; }

 private:
  const DomainPair* train_;
  const ExperimentConfig* cfg_;
  std::optional<SimilarityMatrix> s_aux_, s_target_;
  std::optional<MfusTrainResult> mfus_target_, mfus_aux_, mf_target_, mf_aux_;
};

namespace detail {

// Linked users resolved to row indices in both factor models.
struct LinkedIndex {
  std::vector<int> aux;     // auxiliary-domain user indices
  std::vector<int> target;  // target-domain user indices, aligned with aux
};

inline LinkedIndex resolve_linked(const DomainPair& train) {
  LinkedIndex out;
  for (const auto& id : train.linked_users) {
    const auto a = train.auxiliary.user_index(id);
    const auto t = train.target.user_index(id);
    if (a && t) {
      out.aux.push_back(*a);
      out.target.push_back(*t);
    }
  }
  require(!out.aux.empty(), "pipeline: no linked users resolve in both domains");
  return out;
}

inline std::vector<std::pair<std::string, int>> resolve_cold(const DomainPair& train) {
  std::vector<std::pair<std::string, int>> out;
  for (const auto& id : train.cold_start_users)
    if (auto a = train.auxiliary.user_index(id)) out.emplace_back(id, *a);
  return out;
}

inline PredictionTable make_table(const DomainPair& train,
                                  const std::vector<std::pair<std::string, int>>& cold) {
  PredictionTable table;
  table.item_ids = train.target.item_ids();
  for (int i = 0; i < train.target.n_items(); ++i) table.item_pos[table.item_ids[i]] = i;
  table.user_ids.reserve(cold.size());
  for (const auto& [id, idx] : cold) {
    table.user_pos[id] = static_cast<int>(table.user_ids.size());
    table.user_ids.push_back(id);
  }
  table.values.resize(static_cast<Eigen::Index>(cold.size()), train.target.n_items());
  return table;
}

inline void clamp_table(PredictionTable& table) {
  table.values = table.values.cwiseMax(static_cast<double>(kMinRating))
                     .cwiseMin(static_cast<double>(kMaxRating));
}

// Runs fn(row) for every cold-user row, chunked over jobs threads; rows are
// disjoint so parallel execution is bitwise-equal to sequential.
template <typename Fn>
inline void for_each_row(std::size_t rows, int jobs, Fn&& fn) {
  if (jobs <= 1 || rows < 2) {
    for (std::size_t r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  const int workers = std::min<int>(jobs, static_cast<int>(rows));
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t r = t; r < rows; r += workers) fn(r);
    });
  for (auto& th : pool) th.join();
}

}  // namespace detail

// The full neighborhood-gated pipeline: factorize both domains, then per
// cold-start user pick similar linked users in the auxiliary domain, fit one
// GBT per target dimension on their feature pairs, map the user's auxiliary
// features, and score every target item.
inline PredictionTable run_cdlfm(const DomainPair& train, const ExperimentConfig& cfg,
                                 PipelineArtifacts& artifacts,
                                 std::optional<double> sim_override = std::nullopt) {
  const auto linked = detail::resolve_linked(train);
  const auto cold = detail::resolve_cold(train);
  const double sim = sim_override.value_or(cfg.sim_threshold);

  const Eigen::MatrixXd& u_aux = artifacts.mfus_aux().model.U;
  const Eigen::MatrixXd& u_tgt = artifacts.mfus_target().model.U;
  const Eigen::MatrixXd& v_tgt = artifacts.mfus_target().model.V;
  const SimilarityMatrix& s_aux = artifacts.s_aux();

  std::vector<int> aux_to_target(train.auxiliary.n_users(), -1);
  for (std::size_t j = 0; j < linked.aux.size(); ++j)
    aux_to_target[linked.aux[j]] = linked.target[j];

  PredictionTable table = detail::make_table(train, cold);
  detail::for_each_row(cold.size(), cfg.jobs, [&](std::size_t r) {
    const auto& [id, aux_idx] = cold[r];
    const NeighborSet neighbors =
        select_neighbors(aux_idx, id, linked.aux, s_aux, sim, cfg.fallback_k);
    Eigen::MatrixXd x(neighbors.members.size(), u_aux.cols());
    Eigen::MatrixXd y(neighbors.members.size(), u_tgt.cols());
    for (std::size_t j = 0; j < neighbors.members.size(); ++j) {
      const int v_aux = neighbors.members[j];
      x.row(j) = u_aux.row(v_aux);
      y.row(j) = u_tgt.row(aux_to_target[v_aux]);
    }
    const MappingFunction fn = train_user_mapping(id, x, y, cfg.gbt);
    const Eigen::VectorXd mapped = map_features(fn, u_aux.row(aux_idx));
    table.values.row(r) = predict_ratings(mapped, v_tgt).transpose();
  });
  if (cfg.clamp_predictions) detail::clamp_table(table);
  return table;
}

// TMatrix baseline: plain-MF factors and one ridge-fitted linear map shared
// by all cold-start users.
inline PredictionTable run_tmatrix(const DomainPair& train, const ExperimentConfig& cfg,
                                   PipelineArtifacts& artifacts) {
  const auto linked = detail::resolve_linked(train);
  const auto cold = detail::resolve_cold(train);
  const Eigen::MatrixXd& u_aux = artifacts.mf_aux().model.U;
  const Eigen::MatrixXd& u_tgt = artifacts.mf_target().model.U;
  const Eigen::MatrixXd& v_tgt = artifacts.mf_target().model.V;

  Eigen::MatrixXd x(linked.aux.size(), u_aux.cols()), y(linked.aux.size(), u_tgt.cols());
  for (std::size_t j = 0; j < linked.aux.size(); ++j) {
    x.row(j) = u_aux.row(linked.aux[j]);
    y.row(j) = u_tgt.row(linked.target[j]);
  }
  const LinearMap map = fit_transformation_matrix(x, y, cfg.tmatrix_ridge);

  PredictionTable table = detail::make_table(train, cold);
  detail::for_each_row(cold.size(), cfg.jobs, [&](std::size_t r) {
    const Eigen::VectorXd mapped = map.apply(u_aux.row(cold[r].second).transpose());
    table.values.row(r) = predict_ratings(mapped, v_tgt).transpose();
  });
  if (cfg.clamp_predictions) detail::clamp_table(table);
  return table;
}

// Global-GBT ablations: one mapping trained on all linked users, on top of
// either plain-MF or similarity-regularized factors.
inline PredictionTable run_global_gbt(const DomainPair& train, const ExperimentConfig& cfg,
                                      PipelineArtifacts& artifacts, bool use_mfus_factors) {
  const auto linked = detail::resolve_linked(train);
  const auto cold = detail::resolve_cold(train);
  const Eigen::MatrixXd& u_aux =
      use_mfus_factors ? artifacts.mfus_aux().model.U : artifacts.mf_aux().model.U;
  const Eigen::MatrixXd& u_tgt =
      use_mfus_factors ? artifacts.mfus_target().model.U : artifacts.mf_target().model.U;
  const Eigen::MatrixXd& v_tgt =
      use_mfus_factors ? artifacts.mfus_target().model.V : artifacts.mf_target().model.V;

  Eigen::MatrixXd x(linked.aux.size(), u_aux.cols()), y(linked.aux.size(), u_tgt.cols());
  for (std::size_t j = 0; j < linked.aux.size(); ++j) {
    x.row(j) = u_aux.row(linked.aux[j]);
    y.row(j) = u_tgt.row(linked.target[j]);
  }
  const MappingFunction fn = global_gbt_mapping(x, y, cfg.gbt);

  PredictionTable table = detail::make_table(train, cold);
  detail::for_each_row(cold.size(), cfg.jobs, [&](std::size_t r) {
    const Eigen::VectorXd mapped = map_features(fn, u_aux.row(cold[r].second));
    table.values.row(r) = predict_ratings(mapped, v_tgt).transpose();
  });
  if (cfg.clamp_predictions) detail::clamp_table(table);
  return table;
}

// Paired (prediction, truth) lists over the test records a method can score.
struct EvalPairs {
  std::vector<double> pred, truth;
  std::size_t skipped = 0;
};

inline EvalPairs evaluate_table(const PredictionTable& table,
                                const std::vector<RatingRecord>& test) {
  EvalPairs out;
  for (const auto& rec : test) {
    if (auto p = table.at(rec.user_id, rec.item_id)) {
      out.pred.push_back(*p);
      out.truth.push_back(static_cast<double>(rec.rating));
    } else {
      ++out.skipped;
    }
  }
  return out;
}

inline EvalPairs evaluate_af(const AfModel& model, const std::vector<RatingRecord>& test) {
  EvalPairs out;
  for (const auto& rec : test) {
    out.pred.push_back(model.predict(rec.user_id, rec.item_id));
    out.truth.push_back(static_cast<double>(rec.rating));
  }
  return out;
}

}  // namespace coldmap
