#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "wztt/arx.hpp"
#include "wztt/demand.hpp"
#include "wztt/features.hpp"
#include "wztt/learners.hpp"
#include "wztt/sim.hpp"
#include "wztt/v2i.hpp"

namespace wztt {

/// Invalid or unreadable configuration; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DemandConfig {
  std::string profiles_csv;  // optional month,hour,volume overrides
  double scale = 1.0;        // applied to every hourly volume
};

struct RsuConfig {
  std::vector<double> positions;  // empty: standard layout; else 12 entries, RSU 1 first
  double coverage_radius = 0.05;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  std::vector<int> months = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  int replications = 10;
  SimConfig sim;  // sim.seed is derived per replication
  DemandConfig demand;
  RsuConfig rsu;
  FeatureParams features;
  ArxConfig arx;
  int train_last_month = 10;
  LearnerOptions learners;
  std::vector<ModelKind> models = {std::begin(kAllModels), std::end(kAllModels)};
  double bin_width = 5.0;
  std::string output_dir = "out";
  int threads = 0;  // 0: hardware concurrency

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

ScenarioConfig parse_config(const std::string& text, const std::string& source = "config");
ScenarioConfig load_config(const std::filesystem::path& path);
/// Canonical JSON text with every field; parse_config(dump_config(c)) == c.
std::string dump_config(const ScenarioConfig& config);
/// FNV-1a 64 of the canonical text, hex.
std::string config_hash(const ScenarioConfig& config);

std::vector<Rsu> rsus_for(const ScenarioConfig& config);
std::vector<DemandProfile> profiles_for(const ScenarioConfig& config,
                                        const std::filesystem::path& base_dir = {});

/// "1-12", "11,12", "3" (months 1..3 when a single number is given).
std::vector<int> parse_month_list(const std::string& text);

}  // namespace wztt
