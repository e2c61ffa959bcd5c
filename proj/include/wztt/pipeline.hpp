#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wztt/config.hpp"
#include "wztt/evaluation.hpp"
#include "wztt/features.hpp"

namespace wztt {

/// A stage failed after the configuration was accepted.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct FeatureSet {
  std::vector<FeatureWindow> windows;  // ordered by (month, replication, t)
  std::vector<ReplicationStats> stats;
};

/// One spec per (month, replication), in that order, seeds derived.
std::vector<ReplicationSpec> replication_specs(const ScenarioConfig& config,
                                               const std::filesystem::path& base_dir = {});

/// Runs every replication (concurrently when threads allow) and merges in
/// (month, replication) order. With `raw_dir`, raw dumps are written too.
FeatureSet simulate_features(const ScenarioConfig& config, const std::filesystem::path& base_dir = {},
                             const std::filesystem::path* raw_dir = nullptr);

/// Rebuilds the same FeatureSet windows from raw dumps under `raw_dir`.
std::vector<FeatureWindow> features_from_raw(const ScenarioConfig& config,
                                             const std::filesystem::path& raw_dir,
                                             const std::filesystem::path& base_dir = {});

std::filesystem::path raw_stem(const std::filesystem::path& raw_dir, int month, int replication);

/// Stage drivers. Each writes its artifacts under `out` and updates
/// out/manifest.json; failures raise StageError with the manifest marking it.
void run_simulate(const ScenarioConfig& config, const std::filesystem::path& out,
                  const std::filesystem::path& base_dir = {});
void run_features(const ScenarioConfig& config, const std::filesystem::path& out,
                  const std::filesystem::path& base_dir = {});
void run_design(const ScenarioConfig& config, const std::filesystem::path& out);
void run_fit(const ScenarioConfig& config, const std::filesystem::path& out);
void run_evaluate(const ScenarioConfig& config, const std::filesystem::path& out);
/// simulate (streamed, no raw dumps) -> features -> design -> fit -> evaluate.
void run_pipeline(const ScenarioConfig& config, const std::filesystem::path& out,
                  const std::filesystem::path& base_dir = {});

}  // namespace wztt
