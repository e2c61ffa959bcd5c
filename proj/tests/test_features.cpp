#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "wztt/diagnostics.hpp"
#include "wztt/features.hpp"

using namespace wztt;
namespace fs = std::filesystem;

namespace {

std::vector<SnapshotVehicle> platoon(int n, double head, double spacing, double speed,
                                     VehicleId first_id = 0) {
  std::vector<SnapshotVehicle> s;
  for (int i = n - 1; i >= 0; --i) {
    s.push_back({first_id + static_cast<VehicleId>(i), head - spacing * i, speed});
  }
  return s;
}

// Independent checker: enumerate every index range, keep those that satisfy
// the run conditions and cannot be extended, and return the qualifying run
// with the most downstream head.
std::optional<std::pair<std::size_t, std::size_t>> brute_force_queue(
    const std::vector<SnapshotVehicle>& s, const QueueParams& p, double wz_end) {
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
      const bool extends_left = a > 0 && member(a - 1) && linked(a - 1);
      const bool extends_right = b + 1 < n && member(b + 1) && linked(b);
      if (extends_left || extends_right) continue;
      if (b - a + 1 < static_cast<std::size_t>(p.min_vehicles)) continue;
      if (!best || s[b].position > s[best->second].position) best = std::make_pair(a, b);
    }
  }
  return best;
}

DemandProfile profile_of(std::initializer_list<double> hours) {
  DemandProfile p;
  std::size_t h = 0;
  for (double v : hours) p.hourly_volume[h++] = v;
  return p;
}

ReplicationSpec short_day(double hours, DemandProfile profile, std::uint64_t seed,
                          QueueMode mode = QueueMode::oracle) {
  ReplicationSpec s;
  s.month = 7;
  s.replication = 0;
  s.sim.duration_hours = hours;
  s.sim.seed = seed;
  s.profile = profile;
  s.rsus = standard_rsu_layout(s.sim.geometry);
  s.features.mode = mode;
  return s;
}

bool same_window(const FeatureWindow& a, const FeatureWindow& b) {
  return a.month == b.month && a.replication == b.replication && a.t == b.t &&
         std::memcmp(a.tt_seg.data(), b.tt_seg.data(), sizeof a.tt_seg) == 0 &&
         a.upstream_flow == b.upstream_flow && a.downstream_flow == b.downstream_flow &&
         a.wz_end_acc == b.wz_end_acc && a.q_length == b.q_length &&
         a.start_queue == b.start_queue && a.tt_wz == b.tt_wz && a.missing == b.missing &&
         a.queue_vehicles == b.queue_vehicles;
}

}  // namespace

TEST_CASE("queue detection examples") {
  const RoadGeometry g;
  const QueueParams p;
  const double head = g.wz_start() - 0.05;

  CHECK_FALSE(detect_queue(platoon(4, head, 0.005, 5.0), p, g));

  const auto six = platoon(6, head, 0.008, 5.0);
  const auto q = detect_queue(six, p, g);
  REQUIRE(q);
  CHECK(q->q_length == doctest::Approx(5 * 0.008));
  CHECK(q->vehicle_count == 6);
  CHECK(q->head_position == doctest::Approx(head));
  CHECK(q->tail_position == doctest::Approx(head - 0.04));
  CHECK(q->start_queue == doctest::Approx(0.05 + 0.04));
  CHECK(q->members.size() == 6);

  auto split = platoon(3, head - 0.02 - 2 * 0.008, 0.008, 5.0, 10);
  const auto front = platoon(3, head, 0.008, 5.0, 20);
  split.insert(split.end(), front.begin(), front.end());
  CHECK_FALSE(detect_queue(split, p, g));

  SUBCASE("thresholds are strict") {
    CHECK_FALSE(detect_queue(platoon(6, head, 0.008, 10.0), p, g));
    CHECK_FALSE(detect_queue(platoon(6, head, 0.01, 5.0), p, g));
  }
  SUBCASE("the run nearest the work zone wins") {
    auto two = platoon(5, head - 0.5, 0.005, 2.0, 100);
    const auto near = platoon(7, head, 0.005, 2.0, 200);
    two.insert(two.end(), near.begin(), near.end());
    const auto r = detect_queue(two, p, g);
    REQUIRE(r);
    CHECK(r->vehicle_count == 7);
    CHECK(r->head_position == doctest::Approx(head));
  }
  SUBCASE("vehicles past the work zone end are ignored") {
    CHECK_FALSE(detect_queue(platoon(6, g.wz_end() + 0.1, 0.005, 2.0), p, g));
  }
}

TEST_CASE("queue detection agrees with a brute-force checker") {
  const RoadGeometry g;
  const QueueParams p;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> count(0, 30);
  std::uniform_real_distribution<double> gap(0.001, 0.02);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int with_queue = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = count(rng);
    std::vector<SnapshotVehicle> s;
    double x = g.wz_start() - 0.6 + 0.3 * unit(rng);
    for (int i = 0; i < n; ++i) {
      x += gap(rng);
      const double v = unit(rng) < 0.8 ? 9.9 * unit(rng) : 10.0 + 50.0 * unit(rng);
      s.push_back({static_cast<VehicleId>(i), x, v});
    }
    if (n > 0 && unit(rng) < 0.2) s.back().position = g.wz_end() + 0.001;  // occasionally past the end
    std::sort(s.begin(), s.end(), [](auto& a, auto& b) { return a.position < b.position; });
    const auto got = detect_queue(s, p, g);
    const auto want = brute_force_queue(s, p, g.wz_end());
    REQUIRE(got.has_value() == want.has_value());
    if (!want) continue;
    ++with_queue;
    const auto [a, b] = *want;
    CHECK(got->tail_position == s[a].position);
    CHECK(got->head_position == s[b].position);
    CHECK(got->vehicle_count == static_cast<int>(b - a + 1));
    REQUIRE(got->members.size() == b - a + 1);
    for (std::size_t i = a; i <= b; ++i) CHECK(got->members[i - a] == s[i].vehicle_id);
  }
  CHECK(with_queue > 100);
  CHECK(with_queue < 1000);
}

TEST_CASE("segment travel times") {
  const double span12 = 4.0;
  const double tt = span12 / 60.0 * 3600.0;
  std::vector<PassageRecord> one = {{12, 1, 100.0}, {1, 1, 100.0 + tt}};
  auto s = segment_travel_times(one, 300.0, 600.0);
  REQUIRE(s[10]);
  CHECK(*s[10] == doctest::Approx(240.0));
  CHECK_FALSE(s[0]);  // no RSU 2 record

  std::vector<PassageRecord> two = {{2, 1, 1000.0}, {1, 1, 1200.0}, {2, 2, 1000.0}, {1, 2, 1300.0}};
  s = segment_travel_times(two, 1200.0, 1500.0);
  REQUIRE(s[0]);
  CHECK(*s[0] == doctest::Approx(250.0));

  for (const auto& v : segment_travel_times(two, 0.0, 300.0)) CHECK_FALSE(v);

  WarningCapture capture;
  std::vector<PassageRecord> bad = {{5, 3, 500.0}, {1, 3, 400.0}};
  s = segment_travel_times(bad, 300.0, 600.0);
  CHECK_FALSE(s[3]);
  CHECK(capture.contains("negative travel time"));
}

TEST_CASE("flows count passages at the end units") {
  std::vector<PassageRecord> p;
  CHECK(flows(p, 0, 300) == std::pair(0.0, 0.0));
  for (int i = 0; i < 30; ++i) p.push_back({12, static_cast<VehicleId>(i), 10.0 * i});
  for (int i = 0; i < 28; ++i) p.push_back({1, static_cast<VehicleId>(i), 10.0 * i + 1.0});
  p.push_back({5, 99, 5.0});
  p.push_back({12, 100, 300.0});  // next window
  CHECK(flows(p, 0, 300) == std::pair(30.0, 28.0));
}

TEST_CASE("work-zone end acceleration") {
  const RoadGeometry g;
  const double x = g.wz_end() - 0.05;
  std::vector<ReceivedTrajectory> r = {{1, 1, 100.0, {{90, x, 45, 0.0}, {91, x + 0.0125, 45, 0.0}}}};
  CHECK(*wz_end_acceleration(r, 0, 300, g) == 0.0);
  r = {{1, 1, 100.0, {{90, x, 30, 1.2}}}};
  CHECK(*wz_end_acceleration(r, 0, 300, g) == doctest::Approx(1.2));
  r.push_back({1, 2, 120.0, {{110, g.wz_end() - 0.5, 30, 3.0}}});  // outside the region
  r.push_back({2, 3, 120.0, {{110, x, 30, 3.0}}});                 // not received at RSU 1
  CHECK(*wz_end_acceleration(r, 0, 300, g) == doctest::Approx(1.2));
  CHECK_FALSE(wz_end_acceleration(r, 300, 600, g));
}

TEST_CASE("free-flow constants") {
  const RoadGeometry g;
  const auto rsus = standard_rsu_layout(g);
  CHECK(free_flow_wz_time(g) == doctest::Approx(160.0));
  CHECK(free_flow_segment_time(g, rsus, 2) == doctest::Approx(160.0));
  CHECK(free_flow_segment_time(g, rsus, 12) == doctest::Approx(2.0 / 65 * 3600 + 160.0));
  CHECK(windows_per_day(SimConfig{}) == 288);
}

TEST_CASE("aggregator work-zone travel time") {
  const RoadGeometry g;
  const auto rsus = standard_rsu_layout(g);
  const double x2 = rsus[1].position;
  auto make = [&] { return FeatureAggregator(1, 0, 6, g, rsus, FeatureParams{}); };

  // One vehicle at 45 mph through the work zone, exiting in window 3.
  const double t2 = 800.0;
  const double t1 = t2 + 160.0;
  auto feed = [&](FeatureAggregator& agg, std::optional<QueueInfo> queue_at_3) {
    std::vector<TrajectoryPoint> pts;
    for (int s = 0; s <= 170; ++s) {
      const double t = t2 - 5.0 + s;
      pts.push_back({t, x2 + 45.0 * (t - t2) / 3600.0, 45.0, 0.0});
    }
    for (int k = 0; k < 6; ++k) {
      if (k == 3) {
        agg.add_passages(std::vector<PassageRecord>{{2, 1, t2}, {1, 1, t1}});
        agg.add_received(std::vector<ReceivedTrajectory>{{1, 1, t1, pts}});
      }
      agg.set_oracle_queue(k, k == 3 ? queue_at_3 : std::nullopt);
      agg.finish_window(k);
    }
    return agg.result();
  };

  SUBCASE("no queue") {
    auto agg = make();
    const auto w = feed(agg, std::nullopt);
    CHECK(w[3].tt_wz == doctest::Approx(160.0));
    CHECK((w[3].missing & kMissingTtWz) == 0);
    CHECK(w[3].tt_segment(2) == doctest::Approx(160.0));
    CHECK(agg.tracked_vehicles() == 0);
  }
  SUBCASE("queue tail at the work-zone start matches the no-queue value") {
    QueueInfo q;
    q.tail_position = x2;
    q.head_position = x2 + 0.05;
    q.q_length = 0.05;
    auto agg = make();
    CHECK(feed(agg, q)[3].tt_wz == doctest::Approx(160.0));
  }
  SUBCASE("queue tail upstream uses the trajectory crossing") {
    QueueInfo q;
    q.tail_position = x2 - 45.0 * 4.0 / 3600.0;  // crossed 4 s before RSU 2
    q.head_position = x2;
    auto agg = make();
    const auto w = feed(agg, q);
    CHECK(w[3].tt_wz == doctest::Approx(164.0));
    CHECK(w[3].q_length == doctest::Approx(q.q_length));
  }
  SUBCASE("gaps are filled forward, leading gaps with free flow") {
    auto agg = make();
    const auto w = feed(agg, std::nullopt);
    for (int k : {0, 1, 2}) {
      CHECK(w[k].tt_wz == doctest::Approx(160.0));
      CHECK((w[k].missing & kMissingTtWz) != 0);
      CHECK(w[k].tt_segment(12) == doctest::Approx(free_flow_segment_time(g, rsus, 12)));
      CHECK(w[k].wz_end_acc == 0.0);
    }
    for (int k : {4, 5}) {
      CHECK(w[k].tt_wz == w[3].tt_wz);
      CHECK(w[k].tt_segment(2) == w[3].tt_segment(2));
      CHECK(w[k].downstream_flow == 0.0);
    }
    CHECK(w[3].tt_segment(12) == doctest::Approx(free_flow_segment_time(g, rsus, 12)));
    CHECK((w[3].missing & segment_missing_bit(12)) != 0);
  }
  SUBCASE("windows must be finished in order with an oracle queue") {
    auto agg = make();
    CHECK_THROWS_AS(agg.finish_window(1), std::logic_error);
    CHECK_THROWS_AS(agg.finish_window(0), std::logic_error);
    CHECK_THROWS_AS(agg.result(), std::logic_error);
  }
}

TEST_CASE("streamed and dumped aggregation agree") {
  const fs::path dir = fs::temp_directory_path() / "wztt_features_dump";
  fs::remove_all(dir);
  fs::create_directories(dir);
  for (auto mode : {QueueMode::oracle, QueueMode::v2i}) {
    auto spec = short_day(1.0, profile_of({1600}), 31, mode);
    ReplicationResult streamed;
    {
      RawSink sink(dir / "day");
      streamed = run_replication(spec, &sink);
    }
    const auto dumped = features_from_dumps(dir / "day", spec.month, spec.replication,
                                            windows_per_day(spec.sim), spec.sim.geometry, spec.rsus,
                                            spec.features);
    REQUIRE(streamed.windows.size() == 12);
    REQUIRE(dumped.size() == streamed.windows.size());
    for (std::size_t i = 0; i < dumped.size(); ++i) CHECK(same_window(dumped[i], streamed.windows[i]));
  }
  fs::remove_all(dir);
}

TEST_CASE("a peak-demand day builds a queue") {
  auto spec = short_day(2.0, profile_of({1500, 1500}), 3);
  const auto oracle = run_replication(spec);
  spec.features.mode = QueueMode::v2i;
  const auto v2i = run_replication(spec);
  int queued = 0;
  int v2i_queued = 0;
  double acc = 0;
  for (std::size_t k = 0; k < oracle.windows.size(); ++k) {
    const auto& w = oracle.windows[k];
    const bool none = (w.missing & kMissingQueue) != 0;
    CHECK(none == (w.q_length == 0.0));
    CHECK(none == (w.queue_vehicles == 0));
    if (!none) {
      ++queued;
      acc += w.wz_end_acc;
      CHECK(w.queue_vehicles >= 5);
      CHECK(w.tt_wz >= 160.0);
    }
    v2i_queued += (v2i.windows[k].missing & kMissingQueue) ? 0 : 1;
    CHECK(v2i.windows[k].tt_wz == w.tt_wz);  // target never depends on the mode
  }
  CHECK(queued >= 6);
  CHECK(v2i_queued > 0);
  CHECK(acc / queued > 0.0);
  CHECK(oracle.stats.max_queue_length > 0.1);
}

TEST_CASE("flows balance the simulator exit log") {
  auto spec = short_day(2.0, profile_of({1200, 0}), 9);
  const auto r = run_replication(spec);
  double down = 0;
  double up = 0;
  for (const auto& w : r.windows) {
    down += w.downstream_flow;
    up += w.upstream_flow;
  }
  CHECK(r.stats.present_at_end == 0);
  CHECK(r.stats.exited == r.stats.entered);
  CHECK(down == static_cast<double>(r.stats.exited));
  CHECK(up == static_cast<double>(r.stats.entered));
  CHECK(r.stats.points_logged ==
        r.stats.points_received + r.stats.points_lost_on_exit + r.stats.points_buffered_at_end);
}

TEST_CASE("work-zone travel time never beats free flow") {
  auto spec = short_day(2.0, profile_of({1400, 1700}), 12);
  const auto r = run_replication(spec);
  const RoadGeometry& g = spec.sim.geometry;
  // Vehicles may exceed the posted limit by at most 1 mph inside the zone.
  const double bound = units::travel_seconds(g.wz_length, g.speed_limit_wz + 1.0);
  const double absolute = units::travel_seconds(g.wz_length, spec.sim.driver.desired_speed);
  double max_tt = 0;
  for (const auto& w : r.windows) {
    CHECK(w.tt_wz >= bound);
    CHECK(w.tt_wz > absolute);
    max_tt = std::max(max_tt, w.tt_wz);
  }
  CHECK(max_tt > 200.0);
}

TEST_CASE("more demand never shortens the worst travel time") {
  auto worst = [](double peak) {
    const auto r = run_replication(short_day(2.0, profile_of({peak, peak}), 5));
    double m = 0;
    for (const auto& w : r.windows) m = std::max(m, w.tt_wz);
    return m;
  };
  const double base = worst(800);
  const double doubled = worst(1600);
  CHECK(doubled >= base);
  CHECK(doubled > 1.2 * base);
}

TEST_CASE("feature table round trip") {
  FeatureWindow f;
  f.month = 11;
  f.replication = 3;
  f.t = 42;
  for (int i = 0; i < kSegmentCount; ++i) f.tt_seg[i] = 160.0 + i / 3.0;
  f.upstream_flow = 50;
  f.downstream_flow = 48;
  f.wz_end_acc = 0.0123456789012345;
  f.q_length = 0.3;
  f.start_queue = 0.25;
  f.tt_wz = 300.1;
  f.missing = kMissingQueue | segment_missing_bit(4);
  f.queue_vehicles = 37;
  const fs::path path = fs::temp_directory_path() / "wztt_features_rt.csv";
  std::vector<FeatureWindow> rows = {f, f};
  rows[1].t = 43;
  write_features_csv(path, rows);
  const auto back = read_features_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(same_window(back[0], rows[0]));
  CHECK(same_window(back[1], rows[1]));
  fs::remove(path);

  const auto x = f.exogenous();
  CHECK(x[0] == f.tt_seg[0]);
  CHECK(x[15] == f.start_queue);
  CHECK(exogenous_names()[0] == "TT_2_1");
  CHECK(exogenous_names()[10] == "TT_12_1");
  CHECK(exogenous_names()[15] == "StartQueue");
  CHECK(parse_queue_mode("oracle") == QueueMode::oracle);
  CHECK_THROWS(parse_queue_mode("both"));
}
