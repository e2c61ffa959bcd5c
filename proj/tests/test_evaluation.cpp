#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "wztt/diagnostics.hpp"
#include "wztt/evaluation.hpp"

using namespace wztt;
namespace fs = std::filesystem;

namespace {

std::vector<FeatureWindow> series(int month, int n, const std::function<double(int)>& tt) {
  std::vector<FeatureWindow> out(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    auto& f = out[static_cast<std::size_t>(t)];
    f.month = month;
    f.t = t;
    f.tt_wz = tt(t);
    for (int i = 0; i < kSegmentCount; ++i) f.tt_seg[i] = 10.0 + std::sin(0.1 * t + i);
    f.upstream_flow = 20.0 + std::cos(0.05 * t);
  }
  return out;
}

FittedModel linear(std::vector<std::string> selected) {
  FittedModel m;
  m.selected = std::move(selected);
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("rmse") {
  const Eigen::Vector3d a(1, 2, 3);
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, Eigen::Vector3d(a.array() + 2.5)) == doctest::Approx(2.5));
  CHECK(rmse(Eigen::Vector2d(0, 0), Eigen::Vector2d(3, 4)) == doctest::Approx(std::sqrt(12.5)));
  CHECK_THROWS_AS(rmse(Eigen::VectorXd(a), Eigen::VectorXd(Eigen::Vector2d(1, 2))), std::invalid_argument);
  CHECK_THROWS_AS(rmse(Eigen::VectorXd(0), Eigen::VectorXd(0)), std::invalid_argument);
}

TEST_CASE("persistence baseline") {
  const auto flat = build_design(series(11, 60, [](int) { return 250.0; }), ArxConfig{});
  CHECK(persistence_rmse(flat) == 0.0);
  for (double s : {0.5, 2.0, -3.0}) {
    const auto ramp = build_design(series(11, 60, [&](int t) { return 400.0 + s * t; }), ArxConfig{});
    CHECK(persistence_rmse(ramp) == doctest::Approx(5.0 * std::abs(s)));
  }
}

TEST_CASE("error histogram") {
  const std::vector<double> zeros(7, 0.0);
  const auto z = error_histogram(zeros, 5.0);
  std::size_t nonempty = 0;
  for (const auto& b : z) {
    if (b.count > 0) {
      ++nonempty;
      CHECK(b.count == 7);
      CHECK(b.lo <= 0.0);
      CHECK(b.hi > 0.0);
    }
  }
  CHECK(nonempty == 1);

  const std::vector<double> e = {-15.0, 5.0, 5.0};
  const auto h = error_histogram(e, 10.0);
  for (const auto& b : h) {
    CHECK(b.hi - b.lo == doctest::Approx(10.0));
    if (b.lo == -20.0) CHECK(b.count == 1);
    if (b.lo == 0.0) CHECK(b.count == 2);
  }
  CHECK(h.front().lo == -h.back().hi);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 40.0);
  std::vector<double> many(5000);
  for (auto& v : many) v = d(rng);
  const auto g = error_histogram(many, 5.0);
  std::size_t total = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    total += g[i].count;
    if (i > 0) CHECK(g[i].lo == g[i - 1].hi);
  }
  CHECK(total == many.size());
  // Brute-force count for one bin.
  const auto& mid = g[g.size() / 2];
  CHECK(mid.count == static_cast<std::size_t>(std::count_if(
                         many.begin(), many.end(), [&](double v) { return v >= mid.lo && v < mid.hi; })));

  CHECK_THROWS_AS(error_histogram(e, 0.0), std::invalid_argument);
  const std::vector<double> inf = {1.0, INFINITY};
  CHECK_THROWS_AS(error_histogram(inf, 5.0), std::invalid_argument);
}

TEST_CASE("rsu plan") {
  CHECK(rsu_plan(linear({"TT_12_1 lag1", "TT_12_1 lag3", "TT_wz lag1"})) == std::vector<int>{1, 12});
  CHECK(rsu_plan(linear({"TT_10_1 lag2", "TT_12_1 lag1", "UpstreamFlow lag1", "StartQueue lag3"})) ==
        std::vector<int>{1, 10, 12});
  CHECK(rsu_plan(linear({})).empty());
  CHECK(rsu_plan(linear({"Qlength lag1", "WorkZoneEndAcc lag2"})) == std::vector<int>{1});
  const std::vector<int> ids = {1, 10, 12};
  CHECK(join_ids(ids) == "1;10;12");
  CHECK(join_ids(std::vector<int>{}).empty());
  const auto vars = star_variables();
  CHECK(vars.size() == 17);
  CHECK(vars.back() == "TT_wz");
}

TEST_CASE("evaluate and write the report") {
  std::vector<FeatureWindow> f;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> e(0.0, 3.0);
  for (int month = 9; month <= 12; ++month) {
    auto d = series(month, 120, [&](int t) { return 200.0 + 50.0 * std::sin(0.07 * t) + e(rng); });
    f.insert(f.end(), d.begin(), d.end());
  }
  ArxConfig c;
  c.n_a = 1;
  c.n_b = ArxConfig::filled(1);
  const auto [train, test] = split(build_design(f, c), 10);
  std::vector<FittedModel> models;
  WarningCapture quiet;  // the synthetic segments are collinear
  for (ModelKind k : kAllModels) models.push_back(fit_model(k, train));
  const auto r = evaluate(models, test, 5.0);

  REQUIRE(r.ranked.size() == 4);
  for (std::size_t i = 1; i < r.ranked.size(); ++i) CHECK(r.ranked[i].rmse >= r.ranked[i - 1].rmse);
  CHECK(r.ranked.front().pareto);
  for (const auto& s : r.ranked) {
    CHECK(std::isfinite(s.rmse));
    const auto& m = *std::find_if(models.begin(), models.end(), [&](const FittedModel& x) { return x.kind == s.kind; });
    CHECK(s.rsus == rsu_plan(m));
    CHECK(s.selected == m.selected);
    CHECK(s.rmse == doctest::Approx(rmse(m.predict(test), test.y)));
  }
  CHECK(r.persistence == doctest::Approx(persistence_rmse(test)));
  CHECK(r.predictions.rows() == test.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    std::size_t total = 0;
    for (const auto& b : r.histograms[m]) total += b.count;
    CHECK(total == static_cast<std::size_t>(test.size()));
    for (const auto& label : models[m].selected) {
      const auto v = std::find(r.variables.begin(), r.variables.end(), variable_of(label)) - r.variables.begin();
      CHECK(r.stars[static_cast<std::size_t>(v)][m]);
    }
  }

  const fs::path dir = fs::temp_directory_path() / "wztt_eval";
  fs::remove_all(dir);
  write_report(dir, r, test, "note line");
  for (const char* name : {"report.csv", "stars.csv", "hist.csv", "hist_ols.csv", "hist_stepwise.csv",
                           "hist_elastic_net.csv", "hist_mars.csv", "predictions.csv", "report.txt"}) {
    CHECK(fs::exists(dir / name));
  }
  const auto report = slurp(dir / "report.csv");
  CHECK(report.rfind("model,rmse_s,n_rsus,rsu_list\n", 0) == 0);
  CHECK(report.find("persistence,") != std::string::npos);
  CHECK(slurp(dir / "hist.csv") == slurp(dir / "hist_stepwise.csv"));
  CHECK(slurp(dir / "report.txt").find("note line") != std::string::npos);
  std::ifstream pred(dir / "predictions.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(pred, line);) ++lines;
  CHECK(lines == static_cast<std::size_t>(test.size()) + 1);
  fs::remove_all(dir);

  DesignMatrix empty = test.subset(std::vector<Eigen::Index>{});
  CHECK_THROWS_AS(evaluate(models, empty), std::invalid_argument);
}
