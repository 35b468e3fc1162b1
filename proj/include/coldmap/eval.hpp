#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "coldmap/baselines.hpp"
#include "coldmap/config.hpp"
#include "coldmap/error.hpp"
#include "coldmap/log.hpp"
#include "coldmap/pipeline.hpp"
#include "coldmap/rng.hpp"
#include "coldmap/split.hpp"
#include "coldmap/synthetic.hpp"

namespace coldmap {

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), "rmse: length mismatch");
  require(!pred.empty(), "rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  require(pred.size() == truth.size(), "mae: length mismatch");
  require(!pred.empty(), "mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred[i] - truth[i]);
  return acc / static_cast<double>(pred.size());
}

struct MetricReport {
  std::string method;
  std::string split;  // protocol point descriptor
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t n_predictions = 0;
  std::string config_hash;
  double wall_time_s = 0.0;  // kept out of results.json so runs stay byte-identical

  nlohmann::json to_json() const {
    return nlohmann::json{{"method", method},       {"split", split},
                          {"rmse", rmse},           {"mae", mae},
                          {"n_predictions", n_predictions}, {"config_hash", config_hash},
                          {"rng", kRngAlgorithm}};
  }
};

// results.json is the machine-readable source of truth (deterministic for a
// fixed config and seed); results.csv mirrors it and adds wall-clock timing.
inline void write_results(const std::string& dir, const std::vector<MetricReport>& reports) {
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    std::ofstream out(dir + "/results.json");
    require(out.good(), "cannot open for writing: " + dir + "/results.json");
    out << arr.dump(2) << "\n";
    require(out.good(), "write failed: " + dir + "/results.json");
  }
  {
    std::ofstream out(dir + "/results.csv");
    require(out.good(), "cannot open for writing: " + dir + "/results.csv");
    out << "method,split,rmse,mae,n_predictions,config_hash,rng,wall_time_s\n";
    char buf[64];
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.rmse);
      out << r.method << "," << r.split << "," << buf << ",";
      std::snprintf(buf, sizeof(buf), "%.17g", r.mae);
      out << buf << "," << r.n_predictions << "," << r.config_hash << "," << kRngAlgorithm << ",";
      std::snprintf(buf, sizeof(buf), "%.3f", r.wall_time_s);
      out << buf << "\n";
    }
  }
}

namespace detail {

inline const std::vector<std::string> kKnownMethods = {"cdlfm", "af", "tmatrix", "mf_gbt",
                                                       "mfus_gbt"};

inline void check_methods(const std::vector<std::string>& methods) {
  require(!methods.empty(), "experiment: no methods configured");
  for (const auto& m : methods)
    require(std::find(kKnownMethods.begin(), kKnownMethods.end(), m) != kKnownMethods.end(),
            "experiment: unknown method '" + m + "'");
}

inline double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// no-leakage guard: held-out cells must be absent from the training matrix
inline void assert_no_leak(const SplitResult& sr) {
  for (const auto& rec : sr.test) {
    const auto u = sr.train.target.user_index(rec.user_id);
    const auto i = sr.train.target.item_index(rec.item_id);
    require(!(u && i && sr.train.target.rating(*u, *i)),
            "experiment: test cell leaked into the training matrix");
  }
}

inline MetricReport report_from_pairs(const EvalPairs& pairs, const std::string& method,
                                      const std::string& split_desc,
                                      const std::string& config_hash, double wall_s) {
  require(!pairs.pred.empty(), "experiment: no scorable test predictions for " + method);
  MetricReport r;
  r.method = method;
  r.split = split_desc;
  r.rmse = rmse(pairs.pred, pairs.truth);
  r.mae = mae(pairs.pred, pairs.truth);
  r.n_predictions = pairs.pred.size();
  r.config_hash = config_hash;
  r.wall_time_s = wall_s;
  return r;
}

}  // namespace detail

// Loads the configured two-domain data: CSV paths with optional min-ratings
// filtering, or the synthetic benchmark pair.
inline DomainPair load_pair(const ExperimentConfig& cfg) {
  if (cfg.use_synthetic) return generate_synthetic(cfg.synthetic).pair;
  require(!cfg.data.target_path.empty(), "config: [data] target is required");
  require(!cfg.data.auxiliary_path.empty(), "config: [data] auxiliary is required");
  auto load = [&](const std::string& path) {
    auto records = parse_ratings_file(path, FileFormat::csv, cfg.data.has_header);
    RatingMatrix m = build_rating_matrix(records);
    if (cfg.data.min_user_ratings > 0 || cfg.data.min_item_ratings > 0)
      m = filter_min_ratings(m, cfg.data.min_user_ratings, cfg.data.min_item_ratings);
    return m;
  };
  return make_domain_pair(load(cfg.data.target_path), load(cfg.data.auxiliary_path));
}

// One protocol point: split, run each method, score on the held-out ratings.
inline std::vector<MetricReport> evaluate_point(const DomainPair& pair, const SplitSpec& split,
                                                const ExperimentConfig& cfg,
                                                const std::vector<std::string>& methods,
                                                const std::string& split_desc) {
  detail::check_methods(methods);
  const SplitResult sr = apply_split(pair, split);
  detail::assert_no_leak(sr);
  PipelineArtifacts artifacts(sr.train, cfg);
  const std::string hash = cfg.config_hash();

  std::vector<MetricReport> reports;
  for (const auto& method : methods) {
    const auto start = std::chrono::steady_clock::now();
    EvalPairs pairs;
    if (method == "af") {
      pairs = evaluate_af(average_filling(sr.train.target), sr.test);
    } else if (method == "cdlfm") {
      pairs = evaluate_table(run_cdlfm(sr.train, cfg, artifacts), sr.test);
    } else if (method == "tmatrix") {
      pairs = evaluate_table(run_tmatrix(sr.train, cfg, artifacts), sr.test);
    } else if (method == "mf_gbt") {
      pairs = evaluate_table(run_global_gbt(sr.train, cfg, artifacts, false), sr.test);
    } else if (method == "mfus_gbt") {
      pairs = evaluate_table(run_global_gbt(sr.train, cfg, artifacts, true), sr.test);
    }
    reports.push_back(detail::report_from_pairs(pairs, method, split_desc, hash,
                                                detail::elapsed_s(start)));
    log::info("%s %s rmse=%.4f mae=%.4f n=%zu", split_desc.c_str(), method.c_str(),
              reports.back().rmse, reports.back().mae, reports.back().n_predictions);
  }
  return reports;
}

enum class Protocol { single, density, overlap, sim_sweep };

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "single") return Protocol::single;
  if (s == "density") return Protocol::density;
  if (s == "overlap") return Protocol::overlap;
  if (s == "sim_sweep") return Protocol::sim_sweep;
  throw Error("unknown protocol: " + s);
}

// Density levels resample the training ratings at a fixed cold-start split;
// overlap levels vary the cold-start fraction; the sim sweep holds a 50%
// overlap split fixed and varies the neighbor threshold.
inline std::vector<MetricReport> run_experiment(const ExperimentConfig& cfg, Protocol protocol) {
  const DomainPair pair = load_pair(cfg);
  std::vector<MetricReport> reports;
  char desc[64];

  switch (protocol) {
    case Protocol::single: {
      auto r = evaluate_point(pair, cfg.split, cfg, cfg.methods, "single");
      reports.insert(reports.end(), r.begin(), r.end());
      break;
    }
    case Protocol::density: {
      for (double level : cfg.density_levels) {
        SplitSpec split = cfg.split;
        split.density_level = level;
        split.overlap_level = 1.0;
        std::snprintf(desc, sizeof(desc), "density=%g", level);
        auto r = evaluate_point(pair, split, cfg, cfg.methods, desc);
        reports.insert(reports.end(), r.begin(), r.end());
      }
      break;
    }
    case Protocol::overlap: {
      for (double level : cfg.overlap_levels) {
        SplitSpec split = cfg.split;
        split.density_level = 1.0;
        split.overlap_level = level;
        std::snprintf(desc, sizeof(desc), "overlap=%g", level);
        auto r = evaluate_point(pair, split, cfg, cfg.methods, desc);
        reports.insert(reports.end(), r.begin(), r.end());
      }
      break;
    }
    case Protocol::sim_sweep: {
      SplitSpec split = cfg.split;
      split.density_level = 1.0;
      split.overlap_level = 0.5;
      const SplitResult sr = apply_split(pair, split);
      detail::assert_no_leak(sr);
      PipelineArtifacts artifacts(sr.train, cfg);
      const std::string hash = cfg.config_hash();
      for (double sim : cfg.sim_sweep) {
        const auto start = std::chrono::steady_clock::now();
        const auto pairs = evaluate_table(run_cdlfm(sr.train, cfg, artifacts, sim), sr.test);
        std::snprintf(desc, sizeof(desc), "sim=%g", sim);
        reports.push_back(detail::report_from_pairs(pairs, "cdlfm", desc, hash,
                                                    detail::elapsed_s(start)));
        log::info("%s rmse=%.4f mae=%.4f", desc, reports.back().rmse, reports.back().mae);
      }
      break;
    }
  }
  std::stable_sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.split != b.split) return a.split < b.split;
    return a.method < b.method;
  });
  return reports;
}

// 80/20 single-domain split for the factorization parameter studies.
struct GridSplit {
  RatingMatrix train;
  std::vector<RatingRecord> test;
};

inline GridSplit grid_split(const RatingMatrix& m, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0 && train_fraction < 1, "grid: train_fraction must be in (0,1)");
  const auto records = m.to_records();
  const auto keep = static_cast<std::size_t>(train_fraction * static_cast<double>(records.size()));
  require(keep > 0 && keep < records.size(), "grid: degenerate train/test split");
  SeededRng rng(seed);
  auto idx = rng.sample_indices(records.size(), keep);
  std::sort(idx.begin(), idx.end());
  GridSplit out;
  std::vector<RatingRecord> train_records;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (cursor < idx.size() && idx[cursor] == i) {
      train_records.push_back(records[i]);
      ++cursor;
    } else {
      out.test.push_back(records[i]);
    }
  }
  out.train = RatingMatrix::from_records(train_records);
  return out;
}

inline EvalPairs score_factor_model(const FactorModel& model, const RatingMatrix& train,
                                    const std::vector<RatingRecord>& test) {
  EvalPairs pairs;
  for (const auto& rec : test) {
    const auto u = train.user_index(rec.user_id);
    const auto i = train.item_index(rec.item_id);
    if (!u || !i) {
      ++pairs.skipped;
      continue;
    }
    pairs.pred.push_back(predict_rating(model, *u, *i));
    pairs.truth.push_back(static_cast<double>(rec.rating));
  }
  return pairs;
}

// MFUS sensitivity study: a (K, alpha, beta) sweep and, when rho value lists
// are present, a (rho1, rho2) sweep at the first grid point. Similarity
// components are computed once per train split and recombined per rho.
inline std::vector<MetricReport> parameter_grid(const ExperimentConfig& cfg) {
  RatingMatrix matrix;
  if (cfg.use_synthetic) {
    SingleDomainSpec spec;
    spec.n_users = cfg.synthetic.n_linked + cfg.synthetic.n_cold;
    spec.n_items = cfg.synthetic.n_items_target;
    spec.k_true = cfg.synthetic.k_true;
    spec.n_clusters = cfg.synthetic.n_clusters;
    spec.density = cfg.synthetic.density;
    spec.cluster_spread = cfg.synthetic.cluster_spread;
    spec.pref_sharpness = cfg.synthetic.pref_sharpness;
    spec.seed = cfg.synthetic.seed;
    matrix = generate_synthetic_single(spec).matrix;
  } else {
    require(!cfg.data.target_path.empty(), "grid: [data] target is required");
    matrix = build_rating_matrix(
        parse_ratings_file(cfg.data.target_path, FileFormat::csv, cfg.data.has_header));
    if (cfg.data.min_user_ratings > 0 || cfg.data.min_item_ratings > 0)
      matrix = filter_min_ratings(matrix, cfg.data.min_user_ratings, cfg.data.min_item_ratings);
  }

  const GridSplit split =
      grid_split(matrix, cfg.grid.train_fraction, cfg.seed_for(SeedModule::grid_split));
  const SimilaritySet sims = compute_similarities(split.train, cfg.sim_target, cfg.jobs, true);
  const std::string hash = cfg.config_hash();

  std::vector<MetricReport> reports;
  char desc[96];
  for (int k : cfg.grid.k_values)
    for (double alpha : cfg.grid.alpha_values)
      for (double beta : cfg.grid.beta_values) {
        MfusHyper hyper = cfg.mfus_target;
        hyper.K = k;
        hyper.alpha = alpha;
        hyper.beta = beta;
        const auto start = std::chrono::steady_clock::now();
        const auto trained =
            train_mfus(split.train, beta != 0.0 ? &sims.combined : nullptr, hyper, "grid");
        const auto pairs = score_factor_model(trained.model, split.train, split.test);
        std::snprintf(desc, sizeof(desc), "grid K=%d alpha=%g beta=%g", k, alpha, beta);
        reports.push_back(detail::report_from_pairs(pairs, "mfus", desc, hash,
                                                    detail::elapsed_s(start)));
        log::info("%s rmse=%.4f", desc, reports.back().rmse);
      }

  if (!cfg.grid.rho1_values.empty() && !cfg.grid.rho2_values.empty()) {
    MfusHyper hyper = cfg.mfus_target;
    hyper.K = cfg.grid.k_values.front();
    hyper.alpha = cfg.grid.alpha_values.front();
    hyper.beta = cfg.grid.beta_values.front();
    for (double rho1 : cfg.grid.rho1_values)
      for (double rho2 : cfg.grid.rho2_values) {
        if (rho1 + rho2 > 1.0 + 1e-12) continue;
        const double rho3 = 1.0 - rho1 - rho2;
        SimilarityMatrix combined(split.train.n_users(), SimilarityComponent::combined);
        for (int u = 0; u < split.train.n_users(); ++u)
          for (int v = u + 1; v < split.train.n_users(); ++v)
            combined.set(u, v, rho1 * sims.s1.at(u, v) + rho2 * sims.s2.at(u, v) +
                                   rho3 * sims.s3.at(u, v));
        const auto start = std::chrono::steady_clock::now();
        const auto trained =
            train_mfus(split.train, hyper.beta != 0.0 ? &combined : nullptr, hyper, "grid");
        const auto pairs = score_factor_model(trained.model, split.train, split.test);
        std::snprintf(desc, sizeof(desc), "grid rho1=%g rho2=%g rho3=%g", rho1, rho2, rho3);
        reports.push_back(detail::report_from_pairs(pairs, "mfus", desc, hash,
                                                    detail::elapsed_s(start)));
        log::info("%s rmse=%.4f", desc, reports.back().rmse);
      }
  }
  return reports;
}

}  // namespace coldmap
