// coldmap: cross-domain cold-start recommendation toolkit.
// Subcommands mirror the pipeline stages so long stages can be cached on
// disk: ingest -> similarity -> factorize -> run, plus the experiment and
// grid protocol drivers.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "coldmap/baselines.hpp"
#include "coldmap/config.hpp"
#include "coldmap/eval.hpp"
#include "coldmap/log.hpp"
#include "coldmap/pipeline.hpp"
#include "coldmap/version.hpp"

namespace fs = std::filesystem;
using namespace coldmap;

namespace {

// Writes artifacts through .tmp staging; commit renames everything at once,
// and anything left staged at scope exit is removed. A failed subcommand
// therefore leaves no partial outputs behind.
class ArtifactSink {
 public:
  explicit ArtifactSink(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  ~ArtifactSink() {
    for (const auto& p : staged_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path tmp = dir_ / (name + ".tmp");
    {
      std::ofstream out(tmp);
      require(out.good(), "cannot open for writing: " + tmp.string());
      out << content;
      require(out.good(), "write failed: " + tmp.string());
    }
    staged_.push_back(tmp);
  }

  void commit() {
    for (const auto& tmp : staged_) {
      fs::path final_path = tmp;
      final_path.replace_extension("");  // drop ".tmp"
      fs::rename(tmp, final_path);
    }
    staged_.clear();
  }

 private:
  fs::path dir_;
  std::vector<fs::path> staged_;
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> method;
  std::optional<std::string> output_dir;
};

ExperimentConfig load_config(const std::string& path, const CliOverrides& overrides) {
  ExperimentConfig cfg = ExperimentConfig::from_file(path);
  if (overrides.seed) {
    cfg.master_seed = *overrides.seed;
    cfg.split.seed = cfg.seed_for(SeedModule::split);
    cfg.mfus_target.seed = cfg.seed_for(SeedModule::factorize_target);
    cfg.mfus_aux.seed = cfg.seed_for(SeedModule::factorize_auxiliary);
    cfg.synthetic.seed = cfg.master_seed;
  }
  if (overrides.jobs) cfg.jobs = *overrides.jobs;
  if (overrides.method) cfg.methods = {*overrides.method};
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  cfg.sim_target.validate();
  cfg.sim_aux.validate();
  cfg.mfus_target.validate();
  cfg.mfus_aux.validate();
  cfg.gbt.validate();
  return cfg;
}

RatingMatrix load_domain_matrix(const ExperimentConfig& cfg, const std::string& domain) {
  require(domain == "target" || domain == "aux", "domain must be 'target' or 'aux'");
  if (cfg.use_synthetic) {
    const auto data = generate_synthetic(cfg.synthetic);
    return domain == "target" ? data.pair.target : data.pair.auxiliary;
  }
  const std::string& path = domain == "target" ? cfg.data.target_path : cfg.data.auxiliary_path;
  require(!path.empty(), "config: [data] " + std::string(domain == "target" ? "target" : "auxiliary") +
                             " is required");
  auto m = build_rating_matrix(parse_ratings_file(path, FileFormat::csv, cfg.data.has_header));
  if (cfg.data.min_user_ratings > 0 || cfg.data.min_item_ratings > 0)
    m = filter_min_ratings(m, cfg.data.min_user_ratings, cfg.data.min_item_ratings);
  return m;
}

std::string format_predictions_csv(const PredictionTable& table,
                                   const std::vector<RatingRecord>& test) {
  std::string out = "user_id,item_id,predicted,actual\n";
  char buf[64];
  for (const auto& rec : test) {
    if (auto p = table.at(rec.user_id, rec.item_id)) {
      std::snprintf(buf, sizeof(buf), "%.17g", *p);
      out += rec.user_id + "," + rec.item_id + "," + buf + "," + std::to_string(rec.rating) + "\n";
    }
  }
  return out;
}

std::string format_af_predictions_csv(const AfModel& model,
                                      const std::vector<RatingRecord>& test) {
  std::string out = "user_id,item_id,predicted,actual\n";
  char buf[64];
  for (const auto& rec : test) {
    std::snprintf(buf, sizeof(buf), "%.17g", model.predict(rec.user_id, rec.item_id));
    out += rec.user_id + "," + rec.item_id + "," + buf + "," + std::to_string(rec.rating) + "\n";
  }
  return out;
}

std::string training_log_csv(const MfusTrainResult& result) {
  std::string out = "sweep,objective,mean_step_u,mean_step_v\n";
  char buf[160];
  for (const auto& row : result.log) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.sweep, row.objective,
                  row.mean_step_u, row.mean_step_v);
    out += buf;
  }
  return out;
}

std::string results_json_string(const std::vector<MetricReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return arr.dump(2) + "\n";
}

std::string results_csv_string(const std::vector<MetricReport>& reports) {
  std::string out = "method,split,rmse,mae,n_predictions,config_hash,rng,wall_time_s\n";
  char buf[64];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.rmse);
    out += r.method + "," + r.split + "," + buf + ",";
    std::snprintf(buf, sizeof(buf), "%.17g", r.mae);
    out += buf;
    std::snprintf(buf, sizeof(buf), ",%zu,", r.n_predictions);
    out += buf + r.config_hash + "," + kRngAlgorithm + ",";
    std::snprintf(buf, sizeof(buf), "%.3f\n", r.wall_time_s);
    out += buf;
  }
  return out;
}

int cmd_ingest(const std::string& input, const std::string& output, bool header, int min_user,
               int min_item) {
  auto m = build_rating_matrix(parse_ratings_file(input, FileFormat::csv, header));
  if (min_user > 0 || min_item > 0) m = filter_min_ratings(m, min_user, min_item);
  ArtifactSink sink(fs::path(output).parent_path().empty() ? "."
                                                           : fs::path(output).parent_path());
  sink.write(fs::path(output).filename().string(), m.to_json().dump(2) + "\n");
  sink.commit();
  std::printf("users=%d items=%d entries=%zu density=%.6g\n", m.n_users(), m.n_items(),
              m.n_entries(), m.density());
  return 0;
}

int cmd_similarity(const ExperimentConfig& cfg, const std::string& domain) {
  const RatingMatrix m = load_domain_matrix(cfg, domain);
  const SimilarityParams& params = domain == "target" ? cfg.sim_target : cfg.sim_aux;
  const auto sims = compute_similarities(m, params, cfg.jobs, true);
  ArtifactSink sink(cfg.output_dir);
  sink.write("sim_" + domain + "_s1.json", sims.s1.to_json().dump() + "\n");
  sink.write("sim_" + domain + "_s2.json", sims.s2.to_json().dump() + "\n");
  sink.write("sim_" + domain + "_s3.json", sims.s3.to_json().dump() + "\n");
  sink.write("sim_" + domain + "_combined.json", sims.combined.to_json().dump() + "\n");
  sink.write("effective_config.ini", cfg.canonical_string());
  sink.commit();
  const long long n = m.n_users();
  std::printf("domain=%s users=%lld pairs=%lld\n", domain.c_str(), n, n * (n - 1) / 2);
  return 0;
}

int cmd_factorize(const ExperimentConfig& cfg, const std::string& domain,
                  const std::string& similarity_path) {
  const RatingMatrix m = load_domain_matrix(cfg, domain);
  const MfusHyper& hyper = domain == "target" ? cfg.mfus_target : cfg.mfus_aux;

  std::optional<SimilarityMatrix> sim;
  if (hyper.beta != 0.0) {
    const std::string path = !similarity_path.empty()
                                 ? similarity_path
                                 : cfg.output_dir + "/sim_" + domain + "_combined.json";
    sim = SimilarityMatrix::load(path);
    require(sim->n_users() == m.n_users(),
            "similarity artifact covers " + std::to_string(sim->n_users()) +
                " users but the rating matrix has " + std::to_string(m.n_users()));
  }
  const auto result = train_mfus(m, sim ? &*sim : nullptr, hyper, domain);
  ArtifactSink sink(cfg.output_dir);
  sink.write("model_" + domain + ".json", result.model.to_json().dump() + "\n");
  sink.write("train_log_" + domain + ".csv", training_log_csv(result));
  sink.write("effective_config.ini", cfg.canonical_string());
  sink.commit();
  std::printf("domain=%s K=%d sweeps=%zu objective=%.8g\n", domain.c_str(), result.model.K,
              result.log.size() - 1, result.log.back().objective);
  return 0;
}

// Full pipeline for one split: train, predict the held-out ratings, report
// metrics. With [data] test set, the explicit test file replaces the
// protocol split (cold users are whoever lacks target training ratings).
int cmd_run(const ExperimentConfig& cfg) {
  detail::check_methods(cfg.methods);

  DomainPair train;
  std::vector<RatingRecord> test;
  if (!cfg.use_synthetic && !cfg.data.test_path.empty()) {
    train = make_domain_pair(load_domain_matrix(cfg, "target"), load_domain_matrix(cfg, "aux"));
    test = parse_ratings_file(cfg.data.test_path, FileFormat::csv, cfg.data.has_header);
    for (const auto& id : train.auxiliary.user_ids())
      if (!train.target.user_index(id)) train.cold_start_users.push_back(id);
    std::sort(train.cold_start_users.begin(), train.cold_start_users.end());
  } else {
    const DomainPair pair = load_pair(cfg);
    SplitResult split = apply_split(pair, cfg.split);
    train = std::move(split.train);
    test = std::move(split.test);
  }

  PipelineArtifacts artifacts(train, cfg);
  const std::string hash = cfg.config_hash();
  ArtifactSink sink(cfg.output_dir);

  std::vector<MetricReport> reports;
  bool wrote_mfus_models = false, wrote_mf_models = false, wrote_sim = false;
  for (const auto& method : cfg.methods) {
    const auto start = std::chrono::steady_clock::now();
    EvalPairs pairs;
    if (method == "af") {
      const AfModel model = average_filling(train.target);
      pairs = evaluate_af(model, test);
      sink.write("predictions_af.csv", format_af_predictions_csv(model, test));
    } else {
      PredictionTable table;
      if (method == "cdlfm") {
        table = run_cdlfm(train, cfg, artifacts);
      } else if (method == "tmatrix") {
        table = run_tmatrix(train, cfg, artifacts);
      } else if (method == "mf_gbt") {
        table = run_global_gbt(train, cfg, artifacts, false);
      } else {
        table = run_global_gbt(train, cfg, artifacts, true);
      }
      pairs = evaluate_table(table, test);
      sink.write("predictions_" + method + ".csv", format_predictions_csv(table, test));

      const bool uses_mfus = method == "cdlfm" || method == "mfus_gbt";
      if (uses_mfus && !wrote_mfus_models) {
        sink.write("model_target.json", artifacts.mfus_target().model.to_json().dump() + "\n");
        sink.write("model_aux.json", artifacts.mfus_aux().model.to_json().dump() + "\n");
        sink.write("train_log_target.csv", training_log_csv(artifacts.mfus_target()));
        sink.write("train_log_aux.csv", training_log_csv(artifacts.mfus_aux()));
        wrote_mfus_models = true;
      }
      if (!uses_mfus && !wrote_mf_models) {
        sink.write("model_mf_target.json", artifacts.mf_target().model.to_json().dump() + "\n");
        sink.write("model_mf_aux.json", artifacts.mf_aux().model.to_json().dump() + "\n");
        wrote_mf_models = true;
      }
      if (uses_mfus && !wrote_sim) {
        sink.write("sim_aux_combined.json", artifacts.s_aux().to_json().dump() + "\n");
        wrote_sim = true;
      }
    }
    reports.push_back(detail::report_from_pairs(pairs, method, "single", hash,
                                                detail::elapsed_s(start)));
    log::info("%s rmse=%.4f mae=%.4f n=%zu", method.c_str(), reports.back().rmse,
              reports.back().mae, reports.back().n_predictions);
  }

  sink.write("results.json", results_json_string(reports));
  sink.write("results.csv", results_csv_string(reports));
  sink.write("effective_config.ini", cfg.canonical_string());
  sink.commit();
  for (const auto& r : reports)
    std::printf("%s rmse=%.6g mae=%.6g n=%zu\n", r.method.c_str(), r.rmse, r.mae,
                r.n_predictions);
  return 0;
}

int cmd_experiment(const ExperimentConfig& cfg, const std::string& protocol) {
  const auto reports = run_experiment(cfg, protocol_from_string(protocol));
  ArtifactSink sink(cfg.output_dir);
  sink.write("results.json", results_json_string(reports));
  sink.write("results.csv", results_csv_string(reports));
  sink.write("effective_config.ini", cfg.canonical_string());
  sink.commit();
  for (const auto& r : reports)
    std::printf("%s %s rmse=%.6g mae=%.6g\n", r.split.c_str(), r.method.c_str(), r.rmse, r.mae);
  return 0;
}

int cmd_grid(const ExperimentConfig& cfg) {
  const auto reports = parameter_grid(cfg);
  ArtifactSink sink(cfg.output_dir);
  sink.write("results.json", results_json_string(reports));
  sink.write("results.csv", results_csv_string(reports));
  sink.write("effective_config.ini", cfg.canonical_string());
  sink.commit();
  for (const auto& r : reports)
    std::printf("%s rmse=%.6g mae=%.6g\n", r.split.c_str(), r.rmse, r.mae);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coldmap: cross-domain cold-start recommendation toolkit"};
  app.require_subcommand(1);

  std::string config_path, domain = "target", protocol = "density", similarity_path;
  std::string ingest_input, ingest_output = "matrix.json";
  bool ingest_header = false;
  int ingest_min_user = 0, ingest_min_item = 0;
  CliOverrides overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (ini sections)")->required();
    sub->add_option("--seed", [&overrides](const std::vector<std::string>& v) {
      overrides.seed = std::stoull(v[0]);
      return true;
    }, "override master seed");
    sub->add_option("--jobs", [&overrides](const std::vector<std::string>& v) {
      overrides.jobs = std::stoi(v[0]);
      return true;
    }, "parallelism limit");
    sub->add_option("--output", [&overrides](const std::vector<std::string>& v) {
      overrides.output_dir = v[0];
      return true;
    }, "override output directory");
  };

  auto* ingest = app.add_subcommand("ingest", "parse a ratings CSV into a matrix artifact");
  ingest->add_option("--input", ingest_input, "ratings CSV")->required();
  ingest->add_option("--output", ingest_output, "matrix artifact path");
  ingest->add_flag("--header", ingest_header, "skip a header line");
  ingest->add_option("--min-user-ratings", ingest_min_user, "min ratings per user");
  ingest->add_option("--min-item-ratings", ingest_min_item, "min ratings per item");

  auto* similarity = app.add_subcommand("similarity", "compute user-user similarity matrices");
  add_common(similarity);
  similarity->add_option("--domain", domain, "target|aux");

  auto* factorize = app.add_subcommand("factorize", "train latent factors for one domain");
  add_common(factorize);
  factorize->add_option("--domain", domain, "target|aux");
  factorize->add_option("--similarity", similarity_path, "similarity artifact path");

  auto* run = app.add_subcommand("run", "full pipeline on one split");
  add_common(run);
  run->add_option("--method", [&overrides](const std::vector<std::string>& v) {
    overrides.method = v[0];
    return true;
  }, "run a single method (cdlfm|af|tmatrix|mf_gbt|mfus_gbt)");

  auto* experiment = app.add_subcommand("experiment", "protocol sweeps");
  add_common(experiment);
  experiment->add_option("--protocol", protocol, "density|overlap|sim_sweep");

  auto* grid = app.add_subcommand("grid", "factorization parameter sweep");
  add_common(grid);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed())
      return cmd_ingest(ingest_input, ingest_output, ingest_header, ingest_min_user,
                        ingest_min_item);
    const ExperimentConfig cfg = load_config(config_path, overrides);
    if (similarity->parsed()) return cmd_similarity(cfg, domain);
    if (factorize->parsed()) return cmd_factorize(cfg, domain, similarity_path);
    if (run->parsed()) return cmd_run(cfg);
    if (experiment->parsed()) return cmd_experiment(cfg, protocol);
    if (grid->parsed()) return cmd_grid(cfg);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
  return 0;
}
