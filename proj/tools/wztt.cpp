#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wztt/config.hpp"
#include "wztt/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> months;
  std::optional<int> replications;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Scenario configuration (JSON); built-in defaults if omitted");
  cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--months", o.months, "Months to simulate: 12, 1-10 or 11,12");
  cmd->add_option("--replications", o.replications, "Replications per month");
  cmd->add_option("--mode", o.mode, "Queue features from oracle state or V2I data")
      ->check(CLI::IsMember({"oracle", "v2i"}));
}

wztt::ScenarioConfig resolve(const Overrides& o, std::filesystem::path& base_dir) {
  wztt::ScenarioConfig c;
  if (!o.config.empty()) {
    c = wztt::load_config(o.config);
    base_dir = std::filesystem::path(o.config).parent_path();
  }
  if (o.out) c.output_dir = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.months) c.months = wztt::parse_month_list(*o.months);
  if (o.replications) c.replications = *o.replications;
  if (o.mode) c.features.mode = wztt::parse_queue_mode(*o.mode);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Work-zone travel time simulation, V2I sensing and prediction"};
  app.require_subcommand(1);
  Overrides o;
  struct Stage {
    const char* name;
    const char* help;
  };
  const Stage stages[] = {
      {"simulate", "Simulate every (month, replication) and dump raw V2I records"},
      {"features", "Aggregate raw dumps into 5-minute feature windows"},
      {"design", "Build the lagged ARX design matrix"},
      {"fit", "Fit the regression models on the training months"},
      {"evaluate", "Score models on the test months and write the report"},
      {"pipeline", "Run all stages in one pass"},
  };
  for (const auto& s : stages) add_common(app.add_subcommand(s.name, s.help), o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    std::filesystem::path base_dir;
    const auto config = resolve(o, base_dir);
    const std::filesystem::path out = config.output_dir;
    if (cmd == "simulate") wztt::run_simulate(config, out, base_dir);
    if (cmd == "features") wztt::run_features(config, out, base_dir);
    if (cmd == "design") wztt::run_design(config, out);
    if (cmd == "fit") wztt::run_fit(config, out);
    if (cmd == "evaluate") wztt::run_evaluate(config, out);
    if (cmd == "pipeline") wztt::run_pipeline(config, out, base_dir);
  } catch (const wztt::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
