#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "coldmap/error.hpp"
#include "coldmap/gbt.hpp"
#include "coldmap/mfus.hpp"
#include "coldmap/rng.hpp"
#include "coldmap/similarity.hpp"
#include "coldmap/split.hpp"
#include "coldmap/synthetic.hpp"

namespace coldmap {

struct DataConfig {
  std::string target_path;
  std::string auxiliary_path;
  std::string test_path;  // optional explicit test set; skips the cold-start split
  bool has_header = false;
  int min_user_ratings = 0;
  int min_item_ratings = 0;
};

struct GridConfig {
  std::vector<int> k_values{15};
  std::vector<double> alpha_values{0.01};
  std::vector<double> beta_values{0.0, 0.001, 0.002, 0.005, 0.01};
  std::vector<double> rho1_values;
  std::vector<double> rho2_values;
  double train_fraction = 0.8;
};

// Every hyperparameter of the pipeline in one record; the master seed derives
// all module seeds (see SeedModule offsets).
struct ExperimentConfig {
  DataConfig data;
  bool use_synthetic = false;
  SyntheticSpec synthetic;

  SimilarityParams sim_target, sim_aux;
  MfusHyper mfus_target, mfus_aux;
  GbtHyper gbt;

  double sim_threshold = 0.45;
  int fallback_k = 50;
  bool clamp_predictions = false;
  double tmatrix_ridge = 1e-6;

  std::vector<std::string> methods{"cdlfm"};
  SplitSpec split;  // seed filled from master_seed at load time
  std::vector<double> density_levels{0.5, 0.7, 1.0};
  std::vector<double> overlap_levels{0.3, 0.5, 0.7};
  std::vector<double> sim_sweep{0.2, 0.3, 0.4, 0.45, 0.5};

  GridConfig grid;

  std::string output_dir = "out";
  std::uint64_t master_seed = 42;
  int jobs = 1;

  std::uint64_t seed_for(SeedModule module) const { return derive_seed(master_seed, module); }

  // include_execution drops output_dir and jobs, which cannot affect results;
  // the config hash is computed over that reduced form so it survives moving
  // an identical run to another directory.
  std::string canonical_string(bool include_execution = true) const;
  std::string config_hash() const;

  static ExperimentConfig from_ini(std::istream& in, const std::string& origin = "<config>");
  static ExperimentConfig from_file(const std::string& path);
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    require(pos == v.size(), "");
    return d;
  } catch (...) {
    throw Error("config: key '" + key + "' is not a number: " + v);
  }
}

inline int to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long l = std::stol(v, &pos);
    require(pos == v.size(), "");
    return static_cast<int>(l);
  } catch (...) {
    throw Error("config: key '" + key + "' is not an integer: " + v);
  }
}

inline std::uint64_t to_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long l = std::stoull(v, &pos);
    require(pos == v.size(), "");
    return l;
  } catch (...) {
    throw Error("config: key '" + key + "' is not a 64-bit integer: " + v);
  }
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config: key '" + key + "' is not a boolean: " + v);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::vector<double> to_double_list(const std::string& v, const std::string& key) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(s, key));
  return out;
}

inline std::vector<int> to_int_list(const std::string& v, const std::string& key) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(s, key));
  return out;
}

inline std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", d);
  return buf;
}

inline std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(v[i]);
  }
  return out;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::string fmt_string_list(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

inline void apply_similarity_key(SimilarityParams& p, const std::string& key,
                                 const std::string& value, const std::string& where) {
  if (key == "gamma1") p.gamma1 = to_double(value, key);
  else if (key == "gamma2") p.gamma2 = to_double(value, key);
  else if (key == "gamma3") p.gamma3 = to_double(value, key);
  else if (key == "sigma") p.sigma = to_double(value, key);
  else if (key == "base") p.base = to_double(value, key);
  else if (key == "rho1") p.rho1 = to_double(value, key);
  else if (key == "rho2") p.rho2 = to_double(value, key);
  else if (key == "rho3") p.rho3 = to_double(value, key);
  else if (key == "high_rating_threshold") p.high_rating_threshold = to_int(value, key);
  else if (key == "rated_map") {
    const auto vals = to_double_list(value, key);
    require(vals.size() == 5, "config: rated_map needs 5 values (scores 1..5)");
    for (int r = 1; r <= 5; ++r) p.rated_map[r] = vals[r - 1];
  } else {
    throw Error("config: unknown key '" + key + "' in section [" + where + "]");
  }
}

inline void apply_mfus_key(MfusHyper& h, const std::string& key, const std::string& value,
                           const std::string& where) {
  if (key == "k") h.K = to_int(value, key);
  else if (key == "alpha") h.alpha = to_double(value, key);
  else if (key == "beta") h.beta = to_double(value, key);
  else if (key == "max_outer_iters") h.max_outer_iters = to_int(value, key);
  else if (key == "tol") h.tol = to_double(value, key);
  else if (key == "ls_shrink") h.ls_shrink = to_double(value, key);
  else if (key == "ls_c") h.ls_c = to_double(value, key);
  else if (key == "init_scale") h.init_scale = to_double(value, key);
  else throw Error("config: unknown key '" + key + "' in section [" + where + "]");
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_ini(std::istream& in, const std::string& origin) {
  ExperimentConfig cfg;
  std::string line, section;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, std::pair<std::string, std::string>>> entries;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', origin + ":" + std::to_string(line_no) + ": malformed section");
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    require(!section.empty(), origin + ":" + std::to_string(line_no) + ": key outside a section");
    entries.push_back({section, {key, value}});
  }

  // Shared sections apply to both domains first, then per-domain overrides.
  auto rank = [](const std::string& s) {
    if (s == "similarity" || s == "mfus") return 0;
    return 1;
  };
  std::stable_sort(entries.begin(), entries.end(), [&](const auto& a, const auto& b) {
    return rank(a.first) < rank(b.first);
  });

  for (const auto& [sec, kv] : entries) {
    const auto& [key, value] = kv;
    if (sec == "data") {
      if (key == "target") cfg.data.target_path = value;
      else if (key == "auxiliary") cfg.data.auxiliary_path = value;
      else if (key == "test") cfg.data.test_path = value;
      else if (key == "has_header") cfg.data.has_header = detail::to_bool(value, key);
      else if (key == "min_user_ratings") cfg.data.min_user_ratings = detail::to_int(value, key);
      else if (key == "min_item_ratings") cfg.data.min_item_ratings = detail::to_int(value, key);
      else throw Error("config: unknown key '" + key + "' in section [data]");
    } else if (sec == "synthetic") {
      if (key == "enabled") cfg.use_synthetic = detail::to_bool(value, key);
      else if (key == "n_linked") cfg.synthetic.n_linked = detail::to_int(value, key);
      else if (key == "n_cold") cfg.synthetic.n_cold = detail::to_int(value, key);
      else if (key == "n_items_target") cfg.synthetic.n_items_target = detail::to_int(value, key);
      else if (key == "n_items_aux") cfg.synthetic.n_items_aux = detail::to_int(value, key);
      else if (key == "k_true") cfg.synthetic.k_true = detail::to_int(value, key);
      else if (key == "cross_map") cfg.synthetic.cross_map = cross_map_from_string(value);
      else if (key == "noise_sd") cfg.synthetic.noise_sd = detail::to_double(value, key);
      else if (key == "density") cfg.synthetic.density = detail::to_double(value, key);
      else if (key == "n_clusters") cfg.synthetic.n_clusters = detail::to_int(value, key);
      else if (key == "cluster_spread") cfg.synthetic.cluster_spread = detail::to_double(value, key);
      else if (key == "pref_sharpness") cfg.synthetic.pref_sharpness = detail::to_double(value, key);
      else if (key == "popular_fraction") cfg.synthetic.popular_fraction = detail::to_double(value, key);
      else if (key == "popular_share") cfg.synthetic.popular_share = detail::to_double(value, key);
      else throw Error("config: unknown key '" + key + "' in section [synthetic]");
    } else if (sec == "similarity") {
      detail::apply_similarity_key(cfg.sim_target, key, value, sec);
      detail::apply_similarity_key(cfg.sim_aux, key, value, sec);
    } else if (sec == "similarity_target") {
      detail::apply_similarity_key(cfg.sim_target, key, value, sec);
    } else if (sec == "similarity_aux") {
      detail::apply_similarity_key(cfg.sim_aux, key, value, sec);
    } else if (sec == "mfus") {
      detail::apply_mfus_key(cfg.mfus_target, key, value, sec);
      detail::apply_mfus_key(cfg.mfus_aux, key, value, sec);
    } else if (sec == "mfus_target") {
      detail::apply_mfus_key(cfg.mfus_target, key, value, sec);
    } else if (sec == "mfus_aux") {
      detail::apply_mfus_key(cfg.mfus_aux, key, value, sec);
    } else if (sec == "gbt") {
      if (key == "nu") cfg.gbt.nu = detail::to_double(value, key);
      else if (key == "eta_policy") {
        if (value == "fixed_one") cfg.gbt.eta_policy = GbtHyper::EtaPolicy::fixed_one;
        else if (value == "exact_line_search")
          cfg.gbt.eta_policy = GbtHyper::EtaPolicy::exact_line_search;
        else throw Error("config: unknown eta_policy: " + value);
      } else if (key == "max_stages") cfg.gbt.max_stages = detail::to_int(value, key);
      else if (key == "tol") cfg.gbt.tol = detail::to_double(value, key);
      else if (key == "max_depth") cfg.gbt.max_depth = detail::to_int(value, key);
      else if (key == "min_leaf") cfg.gbt.min_leaf = detail::to_int(value, key);
      else throw Error("config: unknown key '" + key + "' in section [gbt]");
    } else if (sec == "mapping") {
      if (key == "sim") cfg.sim_threshold = detail::to_double(value, key);
      else if (key == "fallback_k") cfg.fallback_k = detail::to_int(value, key);
      else if (key == "clamp_predictions") cfg.clamp_predictions = detail::to_bool(value, key);
      else if (key == "tmatrix_ridge") cfg.tmatrix_ridge = detail::to_double(value, key);
      else throw Error("config: unknown key '" + key + "' in section [mapping]");
    } else if (sec == "experiment") {
      if (key == "methods") cfg.methods = detail::split_list(value);
      else if (key == "seed") cfg.master_seed = detail::to_u64(value, key);
      else if (key == "jobs") cfg.jobs = detail::to_int(value, key);
      else if (key == "output_dir") cfg.output_dir = value;
      else if (key == "cold_start_fraction") cfg.split.cold_start_fraction = detail::to_double(value, key);
      else if (key == "density_level") cfg.split.density_level = detail::to_double(value, key);
      else if (key == "overlap_level") cfg.split.overlap_level = detail::to_double(value, key);
      else if (key == "density_levels") cfg.density_levels = detail::to_double_list(value, key);
      else if (key == "overlap_levels") cfg.overlap_levels = detail::to_double_list(value, key);
      else if (key == "sim_sweep") cfg.sim_sweep = detail::to_double_list(value, key);
      else throw Error("config: unknown key '" + key + "' in section [experiment]");
    } else if (sec == "grid") {
      if (key == "k_values") cfg.grid.k_values = detail::to_int_list(value, key);
      else if (key == "alpha_values") cfg.grid.alpha_values = detail::to_double_list(value, key);
      else if (key == "beta_values") cfg.grid.beta_values = detail::to_double_list(value, key);
      else if (key == "rho1_values") cfg.grid.rho1_values = detail::to_double_list(value, key);
      else if (key == "rho2_values") cfg.grid.rho2_values = detail::to_double_list(value, key);
      else if (key == "train_fraction") cfg.grid.train_fraction = detail::to_double(value, key);
      else throw Error("config: unknown key '" + key + "' in section [grid]");
    } else {
      throw Error("config: unknown section [" + sec + "]");
    }
  }

  cfg.split.seed = cfg.seed_for(SeedModule::split);
  cfg.mfus_target.seed = cfg.seed_for(SeedModule::factorize_target);
  cfg.mfus_aux.seed = cfg.seed_for(SeedModule::factorize_auxiliary);
  cfg.synthetic.seed = cfg.master_seed;
  return cfg;
}

inline ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file: " + path);
  return from_ini(in, path);
}

// Normalized snapshot of every effective value. Reparsing it reproduces the
// config; the report hash is computed from this string.
inline std::string ExperimentConfig::canonical_string(bool include_execution) const {
  using detail::fmt_double;
  std::ostringstream out;
  out << "[data]\n";
  out << "target = " << data.target_path << "\n";
  out << "auxiliary = " << data.auxiliary_path << "\n";
  out << "test = " << data.test_path << "\n";
  out << "has_header = " << (data.has_header ? "true" : "false") << "\n";
  out << "min_user_ratings = " << data.min_user_ratings << "\n";
  out << "min_item_ratings = " << data.min_item_ratings << "\n";
  out << "[synthetic]\n";
  out << "enabled = " << (use_synthetic ? "true" : "false") << "\n";
  out << "n_linked = " << synthetic.n_linked << "\n";
  out << "n_cold = " << synthetic.n_cold << "\n";
  out << "n_items_target = " << synthetic.n_items_target << "\n";
  out << "n_items_aux = " << synthetic.n_items_aux << "\n";
  out << "k_true = " << synthetic.k_true << "\n";
  const char* cm = synthetic.cross_map == SyntheticSpec::CrossMap::linear ? "linear"
                   : synthetic.cross_map == SyntheticSpec::CrossMap::piecewise ? "piecewise"
                                                                               : "polynomial";
  out << "cross_map = " << cm << "\n";
  out << "noise_sd = " << fmt_double(synthetic.noise_sd) << "\n";
  out << "density = " << fmt_double(synthetic.density) << "\n";
  out << "n_clusters = " << synthetic.n_clusters << "\n";
  out << "cluster_spread = " << fmt_double(synthetic.cluster_spread) << "\n";
  out << "pref_sharpness = " << fmt_double(synthetic.pref_sharpness) << "\n";
  out << "popular_fraction = " << fmt_double(synthetic.popular_fraction) << "\n";
  out << "popular_share = " << fmt_double(synthetic.popular_share) << "\n";
  auto emit_similarity = [&](const char* name, const SimilarityParams& p) {
    out << "[" << name << "]\n";
    out << "gamma1 = " << fmt_double(p.gamma1) << "\n";
    out << "gamma2 = " << fmt_double(p.gamma2) << "\n";
    out << "gamma3 = " << fmt_double(p.gamma3) << "\n";
    out << "sigma = " << fmt_double(p.sigma) << "\n";
    out << "base = " << fmt_double(p.base) << "\n";
    out << "rho1 = " << fmt_double(p.rho1) << "\n";
    out << "rho2 = " << fmt_double(p.rho2) << "\n";
    out << "rho3 = " << fmt_double(p.rho3) << "\n";
    out << "high_rating_threshold = " << p.high_rating_threshold << "\n";
    out << "rated_map = " << fmt_double(p.rated_map[1]) << "," << fmt_double(p.rated_map[2]) << ","
        << fmt_double(p.rated_map[3]) << "," << fmt_double(p.rated_map[4]) << ","
        << fmt_double(p.rated_map[5]) << "\n";
  };
  emit_similarity("similarity_target", sim_target);
  emit_similarity("similarity_aux", sim_aux);
  auto emit_mfus = [&](const char* name, const MfusHyper& h) {
    out << "[" << name << "]\n";
    out << "k = " << h.K << "\n";
    out << "alpha = " << fmt_double(h.alpha) << "\n";
    out << "beta = " << fmt_double(h.beta) << "\n";
    out << "max_outer_iters = " << h.max_outer_iters << "\n";
    out << "tol = " << fmt_double(h.tol) << "\n";
    out << "ls_shrink = " << fmt_double(h.ls_shrink) << "\n";
    out << "ls_c = " << fmt_double(h.ls_c) << "\n";
    out << "init_scale = " << fmt_double(h.init_scale) << "\n";
  };
  emit_mfus("mfus_target", mfus_target);
  emit_mfus("mfus_aux", mfus_aux);
  out << "[gbt]\n";
  out << "nu = " << fmt_double(gbt.nu) << "\n";
  out << "eta_policy = " << to_string(gbt.eta_policy) << "\n";
  out << "max_stages = " << gbt.max_stages << "\n";
  out << "tol = " << fmt_double(gbt.tol) << "\n";
  out << "max_depth = " << gbt.max_depth << "\n";
  out << "min_leaf = " << gbt.min_leaf << "\n";
  out << "[mapping]\n";
  out << "sim = " << fmt_double(sim_threshold) << "\n";
  out << "fallback_k = " << fallback_k << "\n";
  out << "clamp_predictions = " << (clamp_predictions ? "true" : "false") << "\n";
  out << "tmatrix_ridge = " << fmt_double(tmatrix_ridge) << "\n";
  out << "[experiment]\n";
  out << "methods = " << detail::fmt_string_list(methods) << "\n";
  out << "seed = " << master_seed << "\n";
  if (include_execution) {
    out << "jobs = " << jobs << "\n";
    out << "output_dir = " << output_dir << "\n";
  }
  out << "cold_start_fraction = " << fmt_double(split.cold_start_fraction) << "\n";
  out << "density_level = " << fmt_double(split.density_level) << "\n";
  out << "overlap_level = " << fmt_double(split.overlap_level) << "\n";
  out << "density_levels = " << detail::fmt_double_list(density_levels) << "\n";
  out << "overlap_levels = " << detail::fmt_double_list(overlap_levels) << "\n";
  out << "sim_sweep = " << detail::fmt_double_list(sim_sweep) << "\n";
  out << "[grid]\n";
  out << "k_values = " << detail::fmt_int_list(grid.k_values) << "\n";
  out << "alpha_values = " << detail::fmt_double_list(grid.alpha_values) << "\n";
  out << "beta_values = " << detail::fmt_double_list(grid.beta_values) << "\n";
  out << "rho1_values = " << detail::fmt_double_list(grid.rho1_values) << "\n";
  out << "rho2_values = " << detail::fmt_double_list(grid.rho2_values) << "\n";
  out << "train_fraction = " << fmt_double(grid.train_fraction) << "\n";
  return out.str();
}

// FNV-1a (64-bit) of the canonical snapshot, rendered as hex.
inline std::string ExperimentConfig::config_hash() const {
  const std::string s = canonical_string(/*include_execution=*/false);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace coldmap
