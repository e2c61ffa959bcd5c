#include "wztt/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace wztt {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Strict object reader: every key must be consumed, unknown keys are errors.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "top level" : path_, "must be an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    read(j_.at(key), name(key), out);
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(j_.at(key), name(key));
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(name(k), "unknown key");
    }
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError("config: " + field + ": " + what);
  }

  static void read(const json& v, const std::string& f, double& out) {
    if (!v.is_number()) fail(f, "expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& f, int& out) {
    if (!v.is_number_integer()) fail(f, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) fail(f, "out of range");
    out = static_cast<int>(x);
  }
  static void read(const json& v, const std::string& f, std::uint64_t& out) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(f, "expected a non-negative integer");
    }
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, const std::string& f, bool& out) {
    if (!v.is_boolean()) fail(f, "expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& f, std::string& out) {
    if (!v.is_string()) fail(f, "expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  static void read(const json& v, const std::string& f, std::vector<T>& out) {
    if (!v.is_array()) fail(f, "expected an array");
    out.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T x{};
      read(v[i], f + "[" + std::to_string(i) + "]", x);
      out.push_back(x);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_geometry(Reader r, RoadGeometry& g) {
  r.get("upstream_length", g.upstream_length);
  r.get("wz_length", g.wz_length);
  r.get("downstream_length", g.downstream_length);
  r.get("lanes_upstream", g.lanes_upstream);
  r.get("lanes_wz", g.lanes_wz);
  r.get("speed_limit_normal", g.speed_limit_normal);
  r.get("speed_limit_wz", g.speed_limit_wz);
  r.get("arrow_panel_pos", g.arrow_panel_pos);
  r.get("vms_pos", g.vms_pos);
  r.finish();
}

void read_driver(Reader r, DriverParams& d) {
  r.get("desired_speed", d.desired_speed);
  r.get("time_headway", d.time_headway);
  r.get("min_gap", d.min_gap);
  r.get("max_accel", d.max_accel);
  r.get("comfort_decel", d.comfort_decel);
  r.get("early_merge_prob", d.early_merge_prob);
  r.get("merge_gap_min", d.merge_gap_min);
  r.finish();
}

void read_sim(Reader r, SimConfig& s) {
  r.get("dt", s.dt);
  r.get("duration_hours", s.duration_hours);
  r.get("vehicle_length", s.vehicle_length);
  r.get("desired_speed_spread", s.desired_speed_spread);
  r.get("emergency_decel", s.emergency_decel);
  r.get("log_interval", s.log_interval);
  r.get("penetration_rate", s.penetration_rate);
  if (r.has("geometry")) read_geometry(r.child("geometry"), s.geometry);
  if (r.has("driver")) read_driver(r.child("driver"), s.driver);
  r.finish();
}

void read_features(Reader r, FeatureParams& f) {
  if (r.has("mode")) {
    std::string mode;
    r.get("mode", mode);
    try {
      f.mode = parse_queue_mode(mode);
    } catch (const std::invalid_argument& e) {
      Reader::fail(r.name("mode"), e.what());
    }
  }
  if (r.has("queue")) {
    auto q = r.child("queue");
    q.get("speed_threshold", f.queue.speed_threshold);
    q.get("spacing_threshold", f.queue.spacing_threshold);
    q.get("min_vehicles", f.queue.min_vehicles);
    q.finish();
  }
  r.get("wz_end_region", f.wz_end_region);
  r.finish();
}

void read_arx(Reader r, ArxConfig& a, int& train_last_month) {
  r.get("lahead", a.lahead);
  r.get("n_a", a.n_a);
  if (r.has("n_b")) {
    const auto& v = r.raw("n_b");
    if (v.is_number_integer()) {
      int n = 0;
      Reader::read(v, r.name("n_b"), n);
      a.n_b = ArxConfig::filled(n);
    } else {
      std::vector<int> list;
      Reader::read(v, r.name("n_b"), list);
      if (list.size() != a.n_b.size()) Reader::fail(r.name("n_b"), "expected an integer or 16 integers");
      std::copy(list.begin(), list.end(), a.n_b.begin());
    }
  }
  r.get("include_current", a.include_current);
  r.get("train_last_month", train_last_month);
  r.finish();
}

void read_learners(Reader r, LearnerOptions& l, std::vector<ModelKind>& models) {
  if (r.has("models")) {
    std::vector<std::string> names;
    r.get("models", names);
    models.clear();
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        models.push_back(parse_model_kind(names[i]));
      } catch (const std::invalid_argument& e) {
        Reader::fail(r.name("models[" + std::to_string(i) + "]"), e.what());
      }
    }
  }
  if (r.has("ols")) {
    auto o = r.child("ols");
    o.get("significance", l.ols.significance);
    o.finish();
  }
  if (r.has("stepwise")) {
    auto o = r.child("stepwise");
    o.get("max_iterations", l.stepwise.max_iterations);
    o.finish();
  }
  if (r.has("elastic_net")) {
    auto o = r.child("elastic_net");
    auto& e = l.elastic_net;
    o.get("alpha", e.alpha);
    o.get("n_lambda", e.n_lambda);
    o.get("lambda_min_ratio", e.lambda_min_ratio);
    o.get("folds", e.folds);
    if (o.has("lambda")) {
      const auto& v = o.raw("lambda");
      if (v.is_null()) {
        e.lambda.reset();
      } else {
        double x = 0;
        Reader::read(v, o.name("lambda"), x);
        e.lambda = x;
      }
    }
    o.get("max_sweeps", e.max_sweeps);
    o.get("tolerance", e.tolerance);
    o.finish();
  }
  if (r.has("mars")) {
    auto o = r.child("mars");
    o.get("max_terms", l.mars.max_terms);
    o.get("max_degree", l.mars.max_degree);
    o.get("penalty", l.mars.penalty);
    o.finish();
  }
  r.finish();
}

ordered_json to_json(const ScenarioConfig& c) {
  const auto& s = c.sim;
  const auto& g = s.geometry;
  const auto& d = s.driver;
  ordered_json j;
  j["seed"] = c.seed;
  j["months"] = c.months;
  j["replications"] = c.replications;
  j["sim"] = {{"dt", s.dt},
              {"duration_hours", s.duration_hours},
              {"vehicle_length", s.vehicle_length},
              {"desired_speed_spread", s.desired_speed_spread},
              {"emergency_decel", s.emergency_decel},
              {"log_interval", s.log_interval},
              {"penetration_rate", s.penetration_rate},
              {"geometry",
               {{"upstream_length", g.upstream_length},
                {"wz_length", g.wz_length},
                {"downstream_length", g.downstream_length},
                {"lanes_upstream", g.lanes_upstream},
                {"lanes_wz", g.lanes_wz},
                {"speed_limit_normal", g.speed_limit_normal},
                {"speed_limit_wz", g.speed_limit_wz},
                {"arrow_panel_pos", g.arrow_panel_pos},
                {"vms_pos", g.vms_pos}}},
              {"driver",
               {{"desired_speed", d.desired_speed},
                {"time_headway", d.time_headway},
                {"min_gap", d.min_gap},
                {"max_accel", d.max_accel},
                {"comfort_decel", d.comfort_decel},
                {"early_merge_prob", d.early_merge_prob},
                {"merge_gap_min", d.merge_gap_min}}}};
  j["demand"] = {{"profiles_csv", c.demand.profiles_csv}, {"scale", c.demand.scale}};
  j["rsu"] = {{"positions", c.rsu.positions}, {"coverage_radius", c.rsu.coverage_radius}};
  j["features"] = {{"mode", std::string(to_string(c.features.mode))},
                   {"queue",
                    {{"speed_threshold", c.features.queue.speed_threshold},
                     {"spacing_threshold", c.features.queue.spacing_threshold},
                     {"min_vehicles", c.features.queue.min_vehicles}}},
                   {"wz_end_region", c.features.wz_end_region}};
  j["arx"] = {{"lahead", c.arx.lahead},
              {"n_a", c.arx.n_a},
              {"n_b", c.arx.n_b},
              {"include_current", c.arx.include_current},
              {"train_last_month", c.train_last_month}};
  std::vector<std::string> models;
  for (auto k : c.models) models.emplace_back(to_string(k));
  const auto& e = c.learners.elastic_net;
  j["learners"] = {{"models", models},
                   {"ols", {{"significance", c.learners.ols.significance}}},
                   {"stepwise", {{"max_iterations", c.learners.stepwise.max_iterations}}},
                   {"elastic_net",
                    {{"alpha", e.alpha},
                     {"n_lambda", e.n_lambda},
                     {"lambda_min_ratio", e.lambda_min_ratio},
                     {"folds", e.folds},
                     {"lambda", e.lambda ? ordered_json(*e.lambda) : ordered_json(nullptr)},
                     {"max_sweeps", e.max_sweeps},
                     {"tolerance", e.tolerance}}},
                   {"mars",
                    {{"max_terms", c.learners.mars.max_terms},
                     {"max_degree", c.learners.mars.max_degree},
                     {"penalty", c.learners.mars.penalty}}}};
  j["evaluation"] = {{"bin_width", c.bin_width}};
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j;
}

}  // namespace

void ScenarioConfig::validate() const {
  auto check = [](bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("config: " + field + ": " + what);
  };
  auto nested = [](const std::string& prefix, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config: " + prefix + ": " + e.what());
    }
  };
  check(replications >= 1, "replications", "must be >= 1");
  check(!months.empty(), "months", "must list at least one month");
  std::set<int> seen;
  for (int m : months) {
    check(m >= 1 && m <= 12, "months", "entries must be in 1..12");
    check(seen.insert(m).second, "months", "duplicate month " + std::to_string(m));
  }
  nested("sim", [&] { sim.validate(); });
  nested("sim", [&] { windows_per_day(sim, features.window_seconds); });
  check(std::abs(std::round(features.window_seconds / sim.dt) * sim.dt - features.window_seconds) < 1e-9,
        "sim.dt", "must divide the 300 s feature window");
  check(demand.scale >= 0, "demand.scale", "must be >= 0");
  check(rsu.positions.empty() || rsu.positions.size() == kRsuCount, "rsu.positions",
        "must be empty or list 12 positions");
  nested("rsu", [&] { rsus_for(*this); });
  check(features.queue.speed_threshold > 0, "features.queue.speed_threshold", "must be > 0");
  check(features.queue.spacing_threshold > 0, "features.queue.spacing_threshold", "must be > 0");
  check(features.queue.min_vehicles >= 1, "features.queue.min_vehicles", "must be >= 1");
  check(features.wz_end_region > 0, "features.wz_end_region", "must be > 0");
  nested("arx", [&] { arx.validate(); });
  check(train_last_month >= 1 && train_last_month <= 12, "arx.train_last_month", "must be in 1..12");
  check(!models.empty(), "learners.models", "must list at least one model");
  check(learners.ols.significance > 0 && learners.ols.significance < 1, "learners.ols.significance",
        "must be in (0, 1)");
  check(learners.stepwise.max_iterations >= 1, "learners.stepwise.max_iterations", "must be >= 1");
  const auto& e = learners.elastic_net;
  check(e.alpha > 0 && e.alpha <= 1, "learners.elastic_net.alpha", "must be in (0, 1]");
  check(e.n_lambda >= 1, "learners.elastic_net.n_lambda", "must be >= 1");
  check(e.lambda_min_ratio > 0 && e.lambda_min_ratio < 1, "learners.elastic_net.lambda_min_ratio",
        "must be in (0, 1)");
  check(e.folds >= 2, "learners.elastic_net.folds", "must be >= 2");
  check(!e.lambda || *e.lambda >= 0, "learners.elastic_net.lambda", "must be >= 0 or null");
  check(e.max_sweeps >= 1, "learners.elastic_net.max_sweeps", "must be >= 1");
  check(e.tolerance > 0, "learners.elastic_net.tolerance", "must be > 0");
  check(learners.mars.max_terms >= 0, "learners.mars.max_terms", "must be >= 0 (0 = automatic)");
  check(learners.mars.max_degree >= 1, "learners.mars.max_degree", "must be >= 1");
  check(learners.mars.penalty >= 0, "learners.mars.penalty", "must be >= 0");
  check(bin_width > 0, "evaluation.bin_width", "must be > 0");
  check(!output_dir.empty(), "output_dir", "must not be empty");
  check(threads >= 0, "threads", "must be >= 0");
}

ScenarioConfig parse_config(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  ScenarioConfig c;
  try {
    Reader r(j, "");
    r.get("seed", c.seed);
    r.get("months", c.months);
    r.get("replications", c.replications);
    if (r.has("sim")) read_sim(r.child("sim"), c.sim);
    if (r.has("demand")) {
      auto d = r.child("demand");
      d.get("profiles_csv", c.demand.profiles_csv);
      d.get("scale", c.demand.scale);
      d.finish();
    }
    if (r.has("rsu")) {
      auto s = r.child("rsu");
      s.get("positions", c.rsu.positions);
      s.get("coverage_radius", c.rsu.coverage_radius);
      s.finish();
    }
    if (r.has("features")) read_features(r.child("features"), c.features);
    if (r.has("arx")) read_arx(r.child("arx"), c.arx, c.train_last_month);
    if (r.has("learners")) read_learners(r.child("learners"), c.learners, c.models);
    if (r.has("evaluation")) {
      auto e = r.child("evaluation");
      e.get("bin_width", c.bin_width);
      e.finish();
    }
    r.get("output_dir", c.output_dir);
    r.get("threads", c.threads);
    r.finish();
  } catch (const json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string dump_config(const ScenarioConfig& config) { return to_json(config).dump(2) + "\n"; }

std::string config_hash(const ScenarioConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : to_json(config).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<Rsu> rsus_for(const ScenarioConfig& c) {
  if (c.rsu.positions.empty()) return standard_rsu_layout(c.sim.geometry, c.rsu.coverage_radius);
  return rsu_layout(c.rsu.positions, c.rsu.coverage_radius, c.sim.geometry);
}

std::vector<DemandProfile> profiles_for(const ScenarioConfig& c, const std::filesystem::path& base_dir) {
  auto profiles = default_profiles();
  if (!c.demand.profiles_csv.empty()) {
    std::filesystem::path p = c.demand.profiles_csv;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    try {
      profiles = load_profile_overrides(p, std::move(profiles));
    } catch (const std::exception& e) {
      throw ConfigError("config: demand.profiles_csv: " + std::string(e.what()));
    }
  }
  if (c.demand.scale != 1.0) {
    for (auto& p : profiles) p = scaled(p, c.demand.scale);
  }
  return profiles;
}

std::vector<int> parse_month_list(const std::string& text) {
  auto bad = [&] { return ConfigError("--months: expected e.g. \"12\", \"1-10\" or \"11,12\", got \"" + text + "\""); };
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      throw bad();
    }
    if (used != s.size() || v < 1 || v > 12) throw bad();
    return v;
  };
  std::vector<int> out;
  if (text.find_first_of(",-") == std::string::npos) {
    const int n = number(text);
    for (int m = 1; m <= n; ++m) out.push_back(m);
    return out;
  }
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(number(part));
    } else {
      const int a = number(part.substr(0, dash));
      const int b = number(part.substr(dash + 1));
      if (b < a) throw bad();
      for (int m = a; m <= b; ++m) out.push_back(m);
    }
  }
  return out;
}

}  // namespace wztt
