#include "wztt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "wztt/arx.hpp"
#include "wztt/csv.hpp"
#include "wztt/diagnostics.hpp"
#include "wztt/learners.hpp"

namespace wztt {
namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "wztt 1.0.0";

class Manifest {
 public:
  Manifest(const ScenarioConfig& config, const fs::path& out) : path_(out / "manifest.json") {
    if (fs::exists(path_)) {
      std::ifstream in(path_);
      try {
        j_ = ordered_json::parse(in);
      } catch (const std::exception&) {
        j_ = ordered_json::object();
      }
    }
    const auto hash = config_hash(config);
    if (!j_.is_object() || j_.value("config_hash", "") != hash) j_ = ordered_json::object();
    j_["version"] = kVersion;
    j_["config_hash"] = hash;
    j_["config"] = ordered_json::parse(dump_config(config));
    ordered_json seeds = ordered_json::array();
    for (int m : config.months) {
      for (int r = 0; r < config.replications; ++r) {
        seeds.push_back({{"month", m}, {"replication", r}, {"seed", replication_seed(config.seed, m, r)}});
      }
    }
    j_["seeds"] = seeds;
    if (!j_.contains("stages")) j_["stages"] = ordered_json::object();
  }

  ordered_json& stage(const std::string& name) { return j_["stages"][name]; }
  ordered_json& counts() { return j_["counts"]; }

  void write() const {
    fs::create_directories(path_.parent_path());
    std::ofstream out(path_);
    out << j_.dump(2) << '\n';
  }

 private:
  fs::path path_;
  ordered_json j_ = ordered_json::object();
};

template <typename Fn>
void run_stage(const std::string& name, const ScenarioConfig& config, const fs::path& out, Fn&& fn) {
  fs::create_directories(out);
  Manifest manifest(config, out);
  manifest.stage(name) = {{"status", "running"}};
  manifest.write();
  std::vector<std::string> warnings;
  std::string failure;
  {
    WarningCapture capture;
    try {
      fn(manifest);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      failure = e.what();
    }
    warnings = capture.messages();
  }
  std::sort(warnings.begin(), warnings.end());
  auto& entry = manifest.stage(name);
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  entry["status"] = failure.empty() ? "ok" : "failed";
  if (!failure.empty()) entry["error"] = failure;
  entry["warnings"] = warnings;
  manifest.write();
  if (!failure.empty()) throw StageError(name, failure);
}

fs::path features_path(const fs::path& out) { return out / "features.csv"; }
fs::path design_path(const fs::path& out) { return out / "design.csv"; }
fs::path model_path(const fs::path& out, ModelKind k) {
  return out / "models" / (std::string(to_string(k)) + ".model");
}

void write_stats_csv(const fs::path& path, const std::vector<ReplicationStats>& stats) {
  csv::Writer w(path);
  w.row(std::vector<std::string>{"month", "replication", "seed", "arrivals", "entered", "exited",
                                 "present_at_end", "waiting_at_end", "points_logged",
                                 "points_received", "points_lost_on_exit", "points_buffered_at_end",
                                 "max_queue_length"});
  for (const auto& s : stats) {
    w.row(s.month, s.replication, s.seed, s.arrivals, s.entered, s.exited, s.present_at_end,
          s.waiting_at_end, s.points_logged, s.points_received, s.points_lost_on_exit,
          s.points_buffered_at_end, s.max_queue_length);
  }
}

void record_feature_counts(Manifest& manifest, const ScenarioConfig& config,
                           const std::vector<FeatureWindow>& windows) {
  std::map<int, std::size_t> per_month;
  for (const auto& f : windows) ++per_month[f.month];
  ordered_json pm = ordered_json::object();
  for (const auto& [m, n] : per_month) pm[std::to_string(m)] = n;
  const auto [train, test] = split_counts(windows, config.train_last_month);
  auto& c = manifest.counts();
  c["feature_rows"] = windows.size();
  c["feature_rows_per_month"] = pm;
  c["train_feature_rows"] = train;
  c["test_feature_rows"] = test;
}

template <typename Task>
void parallel_for(std::size_t count, int threads, Task&& task) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<ReplicationSpec> replication_specs(const ScenarioConfig& config, const fs::path& base_dir) {
  const auto profiles = profiles_for(config, base_dir);
  const auto rsus = rsus_for(config);
  std::vector<ReplicationSpec> specs;
  auto months = config.months;
  std::sort(months.begin(), months.end());
  for (int m : months) {
    for (int r = 0; r < config.replications; ++r) {
      ReplicationSpec s;
      s.month = m;
      s.replication = r;
      s.sim = config.sim;
      s.sim.seed = replication_seed(config.seed, m, r);
      s.profile = profiles[static_cast<std::size_t>(m - 1)];
      s.rsus = rsus;
      s.features = config.features;
      specs.push_back(std::move(s));
    }
  }
  return specs;
}

fs::path raw_stem(const fs::path& raw_dir, int month, int replication) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "m%02d_r%02d", month, replication);
  return raw_dir / buf;
}

FeatureSet simulate_features(const ScenarioConfig& config, const fs::path& base_dir,
                             const fs::path* raw_dir) {
  const auto specs = replication_specs(config, base_dir);
  std::vector<ReplicationResult> results(specs.size());
  if (raw_dir) fs::create_directories(*raw_dir);
  parallel_for(specs.size(), config.threads, [&](std::size_t i) {
    const auto& s = specs[i];
    if (raw_dir) {
      RawSink sink(raw_stem(*raw_dir, s.month, s.replication));
      results[i] = run_replication(s, &sink);
    } else {
      results[i] = run_replication(s);
    }
  });
  FeatureSet out;
  for (auto& r : results) {
    out.windows.insert(out.windows.end(), r.windows.begin(), r.windows.end());
    out.stats.push_back(r.stats);
  }
  return out;
}

std::vector<FeatureWindow> features_from_raw(const ScenarioConfig& config, const fs::path& raw_dir,
                                             const fs::path& base_dir) {
  auto specs = replication_specs(config, base_dir);
  const int windows = windows_per_day(config.sim, config.features.window_seconds);
  std::vector<std::vector<FeatureWindow>> parts(specs.size());
  parallel_for(specs.size(), config.threads, [&](std::size_t i) {
    const auto& s = specs[i];
    parts[i] = features_from_dumps(raw_stem(raw_dir, s.month, s.replication), s.month,
                                   s.replication, windows, s.sim.geometry, s.rsus, s.features);
  });
  std::vector<FeatureWindow> out;
  for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

void run_simulate(const ScenarioConfig& config, const fs::path& out, const fs::path& base_dir) {
  run_stage("simulate", config, out, [&](Manifest& manifest) {
    const fs::path raw = out / "raw";
    const auto set = simulate_features(config, base_dir, &raw);
    write_stats_csv(out / "replications.csv", set.stats);
    manifest.counts()["replications"] = set.stats.size();
  });
}

void run_features(const ScenarioConfig& config, const fs::path& out, const fs::path& base_dir) {
  run_stage("features", config, out, [&](Manifest& manifest) {
    const auto windows = features_from_raw(config, out / "raw", base_dir);
    write_features_csv(features_path(out), windows);
    record_feature_counts(manifest, config, windows);
  });
}

void run_design(const ScenarioConfig& config, const fs::path& out) {
  run_stage("design", config, out, [&](Manifest& manifest) {
    const auto windows = read_features_csv(features_path(out));
    record_feature_counts(manifest, config, windows);
    const auto design = build_design(windows, config.arx);
    write_design_csv(design_path(out), design);
    write_column_map_csv(out / "design_columns.csv", design);
    std::size_t train = 0;
    for (const auto& r : design.rows) train += r.month <= config.train_last_month ? 1 : 0;
    auto& c = manifest.counts();
    c["design_rows"] = design.size();
    c["design_columns"] = design.cols();
    c["train_design_rows"] = train;
    c["test_design_rows"] = design.rows.size() - train;
  });
}

void run_fit(const ScenarioConfig& config, const fs::path& out) {
  run_stage("fit", config, out, [&](Manifest& manifest) {
    const auto design = read_design_csv(design_path(out));
    const auto [train, test] = split(design, config.train_last_month);
    if (train.size() == 0) throw std::runtime_error("training split is empty");
    fs::create_directories(out / "models");
    auto& models = manifest.stage("fit")["models"];
    models = ordered_json::object();
    for (auto kind : config.models) {
      const auto model = fit_model(kind, train, config.learners);
      save_model(model_path(out, kind), model);
      models[std::string(to_string(kind))] = {{"selected", model.selected},
                                              {"rsus", rsu_plan(model)}};
    }
  });
}

void run_evaluate(const ScenarioConfig& config, const fs::path& out) {
  run_stage("evaluate", config, out, [&](Manifest&) {
    const auto design = read_design_csv(design_path(out));
    const auto [train, test] = split(design, config.train_last_month);
    if (test.size() == 0) {
      warn("test split is empty; evaluation skipped");
      return;
    }
    std::vector<FittedModel> models;
    for (auto kind : config.models) models.push_back(load_model(model_path(out, kind)));
    const auto report = evaluate(models, test, config.bin_width);
    std::ostringstream note;
    note << "Queue features: " << to_string(config.features.mode) << "; ARX orders n_a = "
         << config.arx.n_a << ", n_b = [";
    for (std::size_t i = 0; i < config.arx.n_b.size(); ++i) note << (i ? "," : "") << config.arx.n_b[i];
    note << "]" << (config.arx.include_current ? ", lag 0 included" : "");
    write_report(out, report, test, note.str());
  });
}

void run_pipeline(const ScenarioConfig& config, const fs::path& out, const fs::path& base_dir) {
  run_stage("simulate", config, out, [&](Manifest& manifest) {
    const auto set = simulate_features(config, base_dir, nullptr);
    write_stats_csv(out / "replications.csv", set.stats);
    write_features_csv(features_path(out), set.windows);
    manifest.counts()["replications"] = set.stats.size();
    record_feature_counts(manifest, config, set.windows);
  });
  run_design(config, out);
  run_fit(config, out);
  run_evaluate(config, out);
}

}  // namespace wztt
