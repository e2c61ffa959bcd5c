// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/distributions/chi_squared.hpp>

#include "wztt/config.hpp"
#include "wztt/csv.hpp"
#include "wztt/diagnostics.hpp"
#include "wztt/evaluation.hpp"
#include "wztt/pipeline.hpp"

using namespace wztt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::MatrixXd gaussian(Eigen::Index n, Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = z(rng);
  }
  return x;
}

std::vector<std::string> labels(Eigen::Index p) {
  std::vector<std::string> out;
  for (Eigen::Index j = 0; j < p; ++j) out.push_back("x" + std::to_string(j + 1));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Shared by criteria 1 and 8.
struct FullRun {
  fs::path out;
  double seconds = 0.0;
  std::string error;
};

FullRun& full_run(const fs::path& work) {
  static std::optional<FullRun> run;
  if (run) return *run;
  run.emplace();
  run->out = work / "default";
  fs::remove_all(run->out);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    WarningCapture quiet;
    run_pipeline(ScenarioConfig{}, run->out);
  } catch (const std::exception& e) {
    run->error = e.what();
  }
  run->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return *run;
}

// ------------------------------------------------------------------ 1

Outcome dataset_structure(const fs::path& work) {
  auto& run = full_run(work);
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const auto rows = read_features_csv(run.out / "features.csv");
  std::map<int, std::size_t> per_month;
  std::size_t train = 0;
  std::size_t test = 0;
  for (const auto& f : rows) {
    ++per_month[f.month];
    (f.month <= 10 ? train : test) += 1;
  }
  bool ok = per_month.size() == 12 && train == 28800 && test == 5760;
  for (const auto& [m, n] : per_month) ok = ok && n == 2880;
  ok = ok && run.seconds < 1800.0;
  return {ok, fmt("%zu months, min/max rows per month %zu/%zu, train %zu, test %zu, %.0f s", per_month.size(),
                  per_month.empty() ? 0 : std::min_element(per_month.begin(), per_month.end(),
                                                           [](auto& a, auto& b) { return a.second < b.second; })->second,
                  per_month.empty() ? 0 : std::max_element(per_month.begin(), per_month.end(),
                                                           [](auto& a, auto& b) { return a.second < b.second; })->second,
                  train, test, run.seconds)};
}

// ------------------------------------------------------------------ 2

Outcome simulator_invariants() {
  const auto profiles = default_profiles();
  const auto peak = *std::max_element(profiles.begin(), profiles.end(),
                                      [](const auto& a, const auto& b) { return a.peak() < b.peak(); });
  SimConfig cfg;
  cfg.duration_hours = 24.0;
  cfg.seed = 4242;
  auto rng = make_rng(cfg.seed, 1);
  const auto arrivals = generate_day(peak, cfg.duration_hours, 2, rng);
  Simulation sim(cfg, arrivals);
  std::size_t overlaps = 0;
  std::size_t conservation = 0;
  std::size_t max_present = 0;
  std::string collision;
  try {
    while (!sim.finished()) {
      sim.step();
      if (sim.vehicles_entered() != sim.vehicles_exited() + sim.vehicles_present()) ++conservation;
      if (arrivals.size() < sim.vehicles_entered() + sim.vehicles_waiting_to_enter()) ++conservation;
      max_present = std::max(max_present, sim.vehicles_present());
      for (const auto& lane : sim.world().lanes) {
        for (std::size_t i = 1; i < lane.size(); ++i) {
          if (!(lane[i - 1].position - lane[i - 1].vehicle_length > lane[i].position)) ++overlaps;
        }
      }
    }
  } catch (const CollisionError& e) {
    collision = e.what();
  }
  // Every arrival has entered or is still queued at the entry.
  const bool all_accounted = collision.empty() &&
                             sim.vehicles_entered() + sim.vehicles_waiting_to_enter() == arrivals.size();

  // Low demand traverse time, start to end of the work zone.
  SimConfig low;
  low.duration_hours = 2.0;
  low.seed = 77;
  auto lrng = make_rng(low.seed, 1);
  DemandProfile quiet;
  quiet.hourly_volume.fill(250.0);
  Simulation ls(low, generate_day(quiet, low.duration_hours, 2, lrng));
  const RoadGeometry& g = low.geometry;
  std::map<VehicleId, double> start;
  double total = 0.0;
  int n = 0;
  auto crossing = [&](const VehicleState& v, double x) {
    const double t1 = ls.time();
    return t1 - low.dt + (x - v.previous_position) / (v.position - v.previous_position) * low.dt;
  };
  auto visit = [&](const VehicleState& v) {
    if (v.previous_position < g.wz_start() && v.position >= g.wz_start()) start[v.vehicle_id] = crossing(v, g.wz_start());
    if (v.previous_position < g.wz_end() && v.position >= g.wz_end()) {
      auto it = start.find(v.vehicle_id);
      if (it != start.end()) {
        total += crossing(v, g.wz_end()) - it->second;
        ++n;
      }
    }
  };
  while (!ls.finished()) {
    const auto& out = ls.step();
    for (const auto& lane : ls.world().lanes) {
      for (const auto& v : lane) visit(v);
    }
    for (const auto& v : out.exited) visit(v);
  }
  const double mean = n > 0 ? total / n : 0.0;
  const bool ok = collision.empty() && overlaps == 0 && conservation == 0 && all_accounted && n > 100 &&
                  mean >= 160.0 - 1e-6 && mean <= 208.0;
  std::string d = fmt("peak %.0f veh/h day: %zu arrivals, %llu entered, %llu exited, %zu overlaps, %zu balance "
                      "errors, max present %zu; low demand mean traverse %.2f s over %d vehicles",
                      peak.peak(), arrivals.size(), static_cast<unsigned long long>(sim.vehicles_entered()),
                      static_cast<unsigned long long>(sim.vehicles_exited()), overlaps, conservation, max_present,
                      mean, n);
  if (!collision.empty()) d += "; " + collision;
  return {ok, d};
}

// ------------------------------------------------------------------ 3

std::optional<std::pair<std::size_t, std::size_t>> brute_force_queue(const std::vector<SnapshotVehicle>& s,
                                                                     const QueueParams& p, double wz_end) {
  std::optional<std::pair<std::size_t, std::size_t>> best;
  const std::size_t n = s.size();
  auto member = [&](std::size_t i) { return s[i].position <= wz_end && s[i].speed < p.speed_threshold; };
  auto linked = [&](std::size_t i) { return s[i + 1].position - s[i].position < p.spacing_threshold; };
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      bool ok = true;
      for (std::size_t i = a; i <= b && ok; ++i) ok = member(i);
      for (std::size_t i = a; i < b && ok; ++i) ok = linked(i);
      if (!ok) continue;
      if ((a > 0 && member(a - 1) && linked(a - 1)) || (b + 1 < n && member(b + 1) && linked(b))) continue;
      if (b - a + 1 < static_cast<std::size_t>(p.min_vehicles)) continue;
      if (!best || s[b].position > s[best->second].position) best = std::make_pair(a, b);
    }
  }
  return best;
}

Outcome queue_oracle() {
  const RoadGeometry g;
  const QueueParams p;
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> count(0, 40);
  std::uniform_real_distribution<double> gap(0.001, 0.02);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int agree = 0;
  int queues = 0;
  const int trials = 1000;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<SnapshotVehicle> s;
    double x = g.wz_start() - 0.8 + 0.5 * unit(rng);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      x += gap(rng);
      const double v = unit(rng) < 0.75 ? 9.99 * unit(rng) : 10.0 + 55.0 * unit(rng);
      s.push_back({static_cast<VehicleId>(i), x, v});
    }
    if (n > 0 && unit(rng) < 0.2) s.back().position = g.wz_end() + 0.002;
    std::sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.position < b.position; });
    const auto got = detect_queue(s, p, g);
    const auto want = brute_force_queue(s, p, g.wz_end());
    bool same = got.has_value() == want.has_value();
    if (same && want) {
      ++queues;
      const auto [a, b] = *want;
      same = got->tail_position == s[a].position && got->head_position == s[b].position &&
             got->vehicle_count == static_cast<int>(b - a + 1) && got->members.size() == b - a + 1;
      for (std::size_t i = a; same && i <= b; ++i) same = got->members[i - a] == s[i].vehicle_id;
    }
    agree += same ? 1 : 0;
  }
  return {agree == trials, fmt("%d/%d snapshots agree (%d with a queue)", agree, trials, queues)};
}

// ------------------------------------------------------------------ 4

Outcome ols_oracle() {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::MatrixXd x = gaussian(200, 16, rng) * 4.0 + Eigen::MatrixXd::Constant(200, 16, 10.0);
    const Eigen::VectorXd y = x * gaussian(16, 1, rng) + gaussian(200, 1, rng);
    const auto m = fit_ols(make_design(x, y, labels(16)));
    Eigen::MatrixXd a(200, 17);
    a << Eigen::VectorXd::Ones(200), x;
    const Eigen::VectorXd oracle = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    Eigen::VectorXd got(17);
    got << m.raw_intercept(), m.raw_coefficients();
    worst = std::max(worst, (got - oracle).norm() / oracle.norm());
  }
  return {worst < 1e-8, fmt("50 instances 200x16, worst relative difference %.2e (tolerance 1e-8)", worst)};
}

// ------------------------------------------------------------------ 5

Outcome elastic_net_checks(const fs::path& work) {
  std::mt19937_64 rng(5);
  double worst_kkt = 0.0;
  double worst_ols = 0.0;
  std::size_t increases = 0;
  std::size_t sweeps = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd x = gaussian(300, 16, rng);
    x.col(1) = 0.9 * x.col(0) + 0.1 * x.col(1);  // correlated pair
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(16);
    beta.head(5) << 3, -2, 1.5, 0, 0.7;
    const Eigen::VectorXd y = x * beta + gaussian(300, 1, rng);
    const auto s = standardization_of(x);
    const Eigen::MatrixXd z = standardize(x, s);
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double lmax = elastic_net_lambda_max(z, yc, 0.5);
    for (double ratio : {0.9, 0.3, 0.05, 1e-3}) {
      const auto r = elastic_net_cd(z, yc, ratio * lmax, 0.5, nullptr, 100000, 1e-8, true);
      worst_kkt = std::max(worst_kkt, elastic_net_kkt_residual(z, yc, r.beta, ratio * lmax, 0.5));
      for (std::size_t i = 1; i < r.objective.size(); ++i) {
        if (r.objective[i] > r.objective[i - 1] * (1 + 1e-14)) ++increases;
      }
      sweeps += r.objective.size();
    }
    ElasticNetOptions o;
    o.lambda = 0.0;
    const auto en = fit_elastic_net(make_design(x, y, labels(16)), o);
    const auto ols = fit_ols(make_design(x, y, labels(16)));
    worst_ols = std::max(worst_ols, (en.raw_coefficients() - ols.raw_coefficients()).cwiseAbs().maxCoeff());
  }
  std::string extra;
  auto& run = full_run(work);
  double pipeline_kkt = 0.0;
  if (run.error.empty()) {
    pipeline_kkt = load_model(run.out / "models" / "elastic_net.model").info.at("kkt");
    extra = fmt("; default-run model KKT %.2e", pipeline_kkt);
  }
  const bool ok = worst_kkt < 1e-6 && worst_ols < 1e-6 && increases == 0 && pipeline_kkt < 1e-6;
  return {ok, fmt("worst KKT %.2e, lambda=0 vs OLS %.2e, %zu objective increases over %zu sweeps", worst_kkt,
                  worst_ols, increases, sweeps) +
                  extra};
}

// ------------------------------------------------------------------ 6

Outcome stepwise_recovery() {
  const boost::math::chi_squared chi(1.0);
  const double q = boost::math::cdf(boost::math::complement(chi, 2.0 * std::log(16.0)));
  const double predicted = std::pow(1.0 - q, 13);
  int exact = 0;
  const int trials = 100;
  const Eigen::Index n = 200;
  const double b = std::sqrt(10.0 / 3.0);  // signal variance 10, unit noise
  std::set<Eigen::Index> truth = {2, 7, 13};
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(1000 + static_cast<std::uint64_t>(trial));
    const Eigen::MatrixXd x = gaussian(n, 16, rng);
    const Eigen::VectorXd y = b * (x.col(2) + x.col(7) - x.col(13)) + gaussian(n, 1, rng);
    const auto t = stepwise_select(x, y);
    exact += std::set<Eigen::Index>(t.support.begin(), t.support.end()) == truth ? 1 : 0;
  }
  return {exact >= 95, fmt("%d/%d exact supports (need 95); with independent nulls the penalty 2 ln 16 admits "
                           "none of 13 with probability %.3f, i.e. about %.0f/100",
                           exact, trials, predicted, 100 * predicted)};
}

// ------------------------------------------------------------------ 7

Outcome mars_checks(const fs::path& work) {
  const Eigen::Index n = 101;
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(n, 0.0, 1.0);
  const double spacing = 1.0 / static_cast<double>(n - 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = std::max(0.0, x(i) - 0.5);
  const auto m = fit_mars(x, y, {"x"});
  double nearest = INFINITY;
  for (const auto& t : m.basis) {
    for (const auto& h : t.factors) nearest = std::min(nearest, std::abs(h.knot - 0.5));
  }
  int fits = 1;
  int violations = m.info.at("gcv") <= m.info.at("forward_gcv") ? 0 : 1;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    Eigen::MatrixXd xs(150, 5);
    for (Eigen::Index i = 0; i < xs.rows(); ++i) {
      for (Eigen::Index j = 0; j < xs.cols(); ++j) xs(i, j) = u(rng);
    }
    Eigen::VectorXd ys = 0.3 * gaussian(150, 1, rng);
    for (Eigen::Index i = 0; i < 150; ++i) ys(i) += std::max(0.0, xs(i, 0) - 0.1) * (1 + xs(i, 3)) + xs(i, 2);
    MarsTrace t;
    fit_mars(xs, ys, labels(5), {}, &t);
    ++fits;
    violations += t.gcv <= t.forward_gcv ? 0 : 1;
  }
  auto& run = full_run(work);
  if (run.error.empty()) {
    const auto fm = load_model(run.out / "models" / "mars.model");
    ++fits;
    violations += fm.info.at("gcv") <= fm.info.at("forward_gcv") ? 0 : 1;
  }
  return {nearest <= spacing + 1e-12 && violations == 0,
          fmt("nearest knot %.4f from 0.5 (spacing %.4f); GCV above forward model on %d of %d fits", nearest,
              spacing, violations, fits)};
}

// ------------------------------------------------------------------ 8

std::vector<int> rsus_of_label(const std::string& label) {
  static const std::regex seg(R"(TT_(\d+)_1 lag\d+)");
  std::smatch mm;
  if (std::regex_match(label, mm, seg)) return {1, std::stoi(mm[1])};
  if (label.rfind("UpstreamFlow ", 0) == 0) return {12};
  return {1};
}

Outcome end_to_end(const fs::path& work) {
  auto& run = full_run(work);
  if (!run.error.empty()) return {false, "pipeline failed: " + run.error};
  const auto design = read_design_csv(run.out / "design.csv");
  const auto [train, test] = split(design, 10);
  std::map<std::string, std::pair<double, std::string>> reported;
  {
    std::ifstream in(run.out / "report.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = csv::split(line);
      if (f.size() != 4) return {false, "malformed report.csv line: " + line};
      reported[std::string(f[0])] = {csv::parse_double(f[1]), std::string(f[3])};
    }
  }
  bool ok = test.size() > 0;
  double lo = INFINITY;
  double hi = 0.0;
  std::string d;
  std::set<std::size_t> rsu_counts;
  for (ModelKind k : kAllModels) {
    const std::string name(to_string(k));
    const auto m = load_model(run.out / "models" / (name + ".model"));
    const Eigen::VectorXd pred = m.predict(test);
    const double e = std::sqrt((pred - test.y).squaredNorm() / static_cast<double>(test.size()));
    std::set<int> ids;
    for (const auto& l : m.selected) {
      for (int id : rsus_of_label(l)) ids.insert(id);
    }
    std::string joined;
    for (int id : ids) joined += (joined.empty() ? "" : ";") + std::to_string(id);
    auto it = reported.find(name);
    const bool listed = it != reported.end();
    ok = ok && std::isfinite(e) && listed && std::abs(it->second.first - e) <= 1e-6 * e &&
         it->second.second == joined;
    lo = std::min(lo, e);
    hi = std::max(hi, e);
    rsu_counts.insert(ids.size());
    d += fmt("%s %.2f s / %zu RSUs, ", name.c_str(), e, ids.size());
  }
  const double persistence = std::sqrt((test.current - test.y).squaredNorm() / static_cast<double>(test.size()));
  const auto p = reported.find("persistence");
  ok = ok && p != reported.end() && std::isfinite(p->second.first) && p->second.first > 0 &&
       std::abs(p->second.first - persistence) <= 1e-6 * persistence;
  ok = ok && hi <= 2.0 * lo;
  d += fmt("persistence %.2f s; spread ratio %.2f (limit 2)", persistence, hi / lo);
  return {ok, d};
}

// ------------------------------------------------------------------ 9

Outcome determinism(const fs::path& work) {
  ScenarioConfig c;
  c.seed = 2024;
  c.months = {6, 7, 11};
  c.replications = 2;
  c.threads = 3;
  c.learners.mars.max_terms = 21;
  std::vector<fs::path> dirs = {work / "determinism_a", work / "determinism_b"};
  try {
    WarningCapture quiet;
    for (const auto& d : dirs) {
      fs::remove_all(d);
      run_pipeline(c, d);
    }
  } catch (const std::exception& e) {
    return {false, std::string("pipeline failed: ") + e.what()};
  }
  std::set<fs::path> files;
  for (const auto& d : dirs) {
    for (const auto& e : fs::recursive_directory_iterator(d)) {
      if (e.is_regular_file()) files.insert(fs::relative(e.path(), d));
    }
  }
  std::size_t differ = 0;
  std::uintmax_t bytes = 0;
  std::string first;
  for (const auto& f : files) {
    const auto a = slurp(dirs[0] / f);
    if (!fs::exists(dirs[1] / f) || !fs::exists(dirs[0] / f) || a != slurp(dirs[1] / f)) {
      if (first.empty()) first = f.string();
      ++differ;
    }
    bytes += a.size();
  }
  std::string d = fmt("%zu files, %ju bytes, %zu differ", files.size(), bytes, differ);
  if (!first.empty()) d += " (first: " + first + ")";
  return {differ == 0 && files.size() > 5, d};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  fs::path work = fs::temp_directory_path() / "wztt_acceptance";
  std::vector<int> expect_fail;
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory for pipeline runs");
  app.add_option("--expect-fail", expect_fail, "criteria known to fail; reported but not fatal")
      ->check(CLI::Range(1, 9));
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, [&] { return dataset_structure(work); }},
      {2, simulator_invariants},
      {3, queue_oracle},
      {4, ols_oracle},
      {5, [&] { return elastic_net_checks(work); }},
      {6, stepwise_recovery},
      {7, [&] { return mars_checks(work); }},
      {8, [&] { return end_to_end(work); }},
      {9, [&] { return determinism(work); }},
  };
  int unexpected = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool expected = std::find(expect_fail.begin(), expect_fail.end(), id) != expect_fail.end();
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail;
    if (!o.pass && expected) std::cout << "  [known failure]";
    std::cout << std::endl;
    if (!o.pass && !expected) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
