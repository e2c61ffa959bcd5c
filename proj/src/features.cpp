#include "wztt/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "wztt/diagnostics.hpp"

namespace wztt {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Sorted before summing so the result does not depend on arrival order.
std::optional<double> sorted_mean(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

int window_of(double time, double window_seconds) {
  return static_cast<int>(std::floor(time / window_seconds));
}

const std::vector<std::string> kQueueHeader = {"t",           "present",      "q_length",
                                               "start_queue", "head_position", "tail_position",
                                               "vehicles"};

std::vector<std::string> feature_header() {
  std::vector<std::string> h = {"month", "replication", "t"};
  for (int i = 2; i <= kRsuCount; ++i) h.push_back("tt_" + std::to_string(i) + "_1");
  for (const char* name : {"upstream_flow", "downstream_flow", "wz_end_acc", "q_length",
                           "start_queue", "tt_wz", "missing", "queue_vehicles"}) {
    h.emplace_back(name);
  }
  return h;
}

}  // namespace

std::string_view to_string(QueueMode mode) { return mode == QueueMode::oracle ? "oracle" : "v2i"; }

QueueMode parse_queue_mode(std::string_view text) {
  if (text == "oracle") return QueueMode::oracle;
  if (text == "v2i") return QueueMode::v2i;
  throw std::invalid_argument("mode must be \"oracle\" or \"v2i\", got \"" + std::string(text) +
                              "\"");
}

std::array<double, kExogenousCount> FeatureWindow::exogenous() const {
  std::array<double, kExogenousCount> x{};
  std::copy(tt_seg.begin(), tt_seg.end(), x.begin());
  x[11] = upstream_flow;
  x[12] = downstream_flow;
  x[13] = wz_end_acc;
  x[14] = q_length;
  x[15] = start_queue;
  return x;
}

const std::array<std::string, kExogenousCount>& exogenous_names() {
  static const auto names = [] {
    std::array<std::string, kExogenousCount> n;
    for (int i = 2; i <= kRsuCount; ++i) n[static_cast<std::size_t>(i - 2)] = "TT_" + std::to_string(i) + "_1";
    n[11] = "UpstreamFlow";
    n[12] = "DownstreamFlow";
    n[13] = "WorkZoneEndAcc";
    n[14] = "Qlength";
    n[15] = "StartQueue";
    return n;
  }();
  return names;
}

std::optional<QueueInfo> detect_queue(std::span<const SnapshotVehicle> snapshot,
                                      const QueueParams& params, const RoadGeometry& geometry) {
  std::optional<QueueInfo> best;
  std::size_t i = 0;
  const std::size_t n = snapshot.size();
  while (i < n) {
    if (snapshot[i].position > geometry.wz_end()) break;
    if (!(snapshot[i].speed < params.speed_threshold)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && snapshot[j + 1].position <= geometry.wz_end() &&
           snapshot[j + 1].speed < params.speed_threshold &&
           snapshot[j + 1].position - snapshot[j].position < params.spacing_threshold) {
      ++j;
    }
    const std::size_t count = j - i + 1;
    if (count >= static_cast<std::size_t>(params.min_vehicles)) {
      QueueInfo q;
      q.tail_position = snapshot[i].position;
      q.head_position = snapshot[j].position;
      q.q_length = q.head_position - q.tail_position;
      q.start_queue = geometry.wz_start() - q.tail_position;
      q.vehicle_count = static_cast<int>(count);
      for (std::size_t k = i; k <= j; ++k) q.members.push_back(snapshot[k].vehicle_id);
      best = std::move(q);  // later runs lie further downstream
    }
    i = j + 1;
  }
  return best;
}

std::vector<SnapshotVehicle> snapshot_of(const World& world, const RoadGeometry& geometry) {
  std::vector<SnapshotVehicle> out;
  for (const auto& lane : world.lanes) {
    for (const auto& v : lane) {
      if (v.position <= geometry.wz_end()) out.push_back({v.vehicle_id, v.position, v.speed});
    }
  }
  std::sort(out.begin(), out.end(), [](const SnapshotVehicle& a, const SnapshotVehicle& b) {
    return a.position < b.position || (a.position == b.position && a.vehicle_id < b.vehicle_id);
  });
  return out;
}

std::array<std::optional<double>, kSegmentCount> segment_travel_times(
    std::span<const PassageRecord> passages, double lo, double hi) {
  std::map<VehicleId, std::array<double, kRsuCount>> by_vehicle;
  for (const auto& p : passages) {
    auto [it, inserted] = by_vehicle.try_emplace(p.vehicle_id);
    if (inserted) it->second.fill(kNaN);
    it->second[static_cast<std::size_t>(p.rsu_id - 1)] = p.timestamp;
  }
  std::array<std::vector<double>, kSegmentCount> samples;
  for (const auto& [id, t] : by_vehicle) {
    if (!(t[0] >= lo && t[0] < hi)) continue;
    for (int i = 2; i <= kRsuCount; ++i) {
      const double ti = t[static_cast<std::size_t>(i - 1)];
      if (std::isnan(ti)) continue;
      const double d = t[0] - ti;
      if (d < 0) {
        warn("negative travel time RSU " + std::to_string(i) + " to RSU 1 for vehicle " +
             std::to_string(id) + "; record rejected");
        continue;
      }
      samples[static_cast<std::size_t>(i - 2)].push_back(d);
    }
  }
  std::array<std::optional<double>, kSegmentCount> out;
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = sorted_mean(std::move(samples[s]));
  return out;
}

std::pair<double, double> flows(std::span<const PassageRecord> passages, double lo, double hi) {
  double up = 0.0;
  double down = 0.0;
  for (const auto& p : passages) {
    if (!(p.timestamp >= lo && p.timestamp < hi)) continue;
    if (p.rsu_id == kRsuCount) up += 1.0;
    if (p.rsu_id == 1) down += 1.0;
  }
  return {up, down};
}

std::optional<double> wz_end_acceleration(std::span<const ReceivedTrajectory> received, double lo,
                                          double hi, const RoadGeometry& geometry, double region) {
  std::vector<double> values;
  for (const auto& r : received) {
    if (r.rsu_id != 1 || !(r.received_at >= lo && r.received_at < hi)) continue;
    for (const auto& p : r.points) {
      if (p.position >= geometry.wz_end() - region && p.position <= geometry.wz_end()) {
        values.push_back(p.acceleration);
      }
    }
  }
  return sorted_mean(std::move(values));
}

double free_flow_segment_time(const RoadGeometry& g, std::span<const Rsu> rsus, int rsu_id) {
  const double from = rsus[static_cast<std::size_t>(rsu_id - 1)].position;
  const double to = rsus[0].position;
  const double upstream = std::max(0.0, std::min(to, g.wz_start()) - from);
  const double inside = std::max(0.0, std::min(to, g.wz_end()) - std::max(from, g.wz_start()));
  const double downstream = std::max(0.0, to - std::max(from, g.wz_end()));
  return units::travel_seconds(upstream + downstream, g.speed_limit_normal) +
         units::travel_seconds(inside, g.speed_limit_wz);
}

double free_flow_wz_time(const RoadGeometry& g) {
  return units::travel_seconds(g.wz_length, g.speed_limit_wz);
}

FeatureAggregator::FeatureAggregator(int month, int replication, int window_count,
                                     const RoadGeometry& geometry, std::vector<Rsu> rsus,
                                     FeatureParams params)
    : month_(month),
      replication_(replication),
      window_count_(window_count),
      geometry_(geometry),
      rsus_(std::move(rsus)),
      params_(params),
      rsu1_exits_(static_cast<std::size_t>(window_count)),
      seg_(static_cast<std::size_t>(window_count)),
      acc_(static_cast<std::size_t>(window_count)),
      up_count_(static_cast<std::size_t>(window_count), 0),
      down_count_(static_cast<std::size_t>(window_count), 0),
      oracle_queue_(static_cast<std::size_t>(window_count)),
      oracle_set_(static_cast<std::size_t>(window_count), false) {
  if (rsus_.size() != kRsuCount) throw std::invalid_argument("expected 12 roadside units");
  for (auto& r : rsus_) {
    r.passages.clear();
    r.received.clear();
  }
}

FeatureAggregator::Track& FeatureAggregator::track(VehicleId id) {
  if (id >= tracks_.size()) tracks_.resize(static_cast<std::size_t>(id) + 1);
  auto& t = tracks_[static_cast<std::size_t>(id)];
  if (!t.live && !t.retired) {
    t.live = true;
    t.passage.fill(kNaN);
  }
  return t;
}

void FeatureAggregator::add_passages(std::span<const PassageRecord> passages) {
  for (const auto& p : passages) {
    if (p.rsu_id < 1 || p.rsu_id > kRsuCount) {
      throw std::invalid_argument("passage with rsu_id " + std::to_string(p.rsu_id));
    }
    auto& t = track(p.vehicle_id);
    if (t.retired) continue;
    t.passage[static_cast<std::size_t>(p.rsu_id - 1)] = p.timestamp;
    const int k = window_of(p.timestamp, params_.window_seconds);
    if (k < 0 || k >= window_count_) continue;
    const auto w = static_cast<std::size_t>(k);
    if (p.rsu_id == kRsuCount) ++up_count_[w];
    if (p.rsu_id != 1) continue;
    ++down_count_[w];
    rsu1_exits_[w].push_back(p.vehicle_id);
    for (int i = 2; i <= kRsuCount; ++i) {
      const double ti = t.passage[static_cast<std::size_t>(i - 1)];
      if (std::isnan(ti)) continue;
      const double d = p.timestamp - ti;
      if (d < 0) {
        warn("negative travel time RSU " + std::to_string(i) + " to RSU 1 for vehicle " +
             std::to_string(p.vehicle_id) + "; record rejected");
        continue;
      }
      seg_[w][static_cast<std::size_t>(i - 2)].push_back(d);
    }
  }
}

void FeatureAggregator::add_received(std::span<const ReceivedTrajectory> received) {
  for (const auto& r : received) {
    auto& t = track(r.vehicle_id);
    if (t.retired) continue;
    t.points.insert(t.points.end(), r.points.begin(), r.points.end());
    if (r.rsu_id != 1) continue;
    const int k = window_of(r.received_at, params_.window_seconds);
    if (k < 0 || k >= window_count_) continue;
    for (const auto& p : r.points) {
      if (p.position >= geometry_.wz_end() - params_.wz_end_region &&
          p.position <= geometry_.wz_end()) {
        acc_[static_cast<std::size_t>(k)].push_back(p.acceleration);
      }
    }
  }
}

void FeatureAggregator::set_oracle_queue(int k, std::optional<QueueInfo> queue) {
  if (k < 0 || k >= window_count_) return;
  oracle_queue_[static_cast<std::size_t>(k)] = std::move(queue);
  oracle_set_[static_cast<std::size_t>(k)] = true;
}

std::optional<QueueInfo> FeatureAggregator::reconstructed_queue(double time) const {
  std::vector<SnapshotVehicle> snap;
  for (std::size_t id = 0; id < tracks_.size(); ++id) {
    const auto& t = tracks_[id];
    if (!t.live || t.retired || t.points.empty()) continue;
    const auto p = interpolate_at(t.points, time);
    if (p && p->position <= geometry_.wz_end()) {
      snap.push_back({static_cast<VehicleId>(id), p->position, p->speed});
    }
  }
  std::sort(snap.begin(), snap.end(), [](const SnapshotVehicle& a, const SnapshotVehicle& b) {
    return a.position < b.position || (a.position == b.position && a.vehicle_id < b.vehicle_id);
  });
  return detect_queue(snap, params_.queue, geometry_);
}

std::optional<double> FeatureAggregator::tt_wz_for(int k,
                                                   const std::optional<QueueInfo>& queue) const {
  std::vector<double> samples;
  const bool upstream_queue = queue && queue->tail_position < rsus_[1].position;
  for (VehicleId id : rsu1_exits_[static_cast<std::size_t>(k)]) {
    const auto& t = tracks_[static_cast<std::size_t>(id)];
    const double exit = t.passage[0];
    double start = kNaN;
    if (upstream_queue) {
      if (const auto c = crossing_time(t.points, queue->tail_position)) start = *c;
    } else {
      start = t.passage[1];
    }
    if (std::isnan(start)) continue;
    const double d = exit - start;
    if (d > 0) samples.push_back(d);
  }
  return sorted_mean(std::move(samples));
}

void FeatureAggregator::finish_window(int k) {
  if (k != static_cast<int>(windows_.size()) || k >= window_count_) {
    throw std::logic_error("windows must be finished in order");
  }
  const auto w = static_cast<std::size_t>(k);
  if (!oracle_set_[w]) throw std::logic_error("oracle queue missing for window " + std::to_string(k));

  FeatureWindow f;
  f.month = month_;
  f.replication = replication_;
  f.t = k;
  for (std::size_t s = 0; s < kSegmentCount; ++s) {
    if (auto m = sorted_mean(seg_[w][s])) {
      f.tt_seg[s] = *m;
    } else {
      f.missing |= 1u << s;
    }
  }
  f.upstream_flow = up_count_[w];
  f.downstream_flow = down_count_[w];
  if (auto a = sorted_mean(acc_[w])) {
    f.wz_end_acc = *a;
  } else {
    f.missing |= kMissingAccel;
  }

  const double start = static_cast<double>(k) * params_.window_seconds;
  const auto queue =
      params_.mode == QueueMode::oracle ? oracle_queue_[w] : reconstructed_queue(start);
  if (queue) {
    f.q_length = queue->q_length;
    f.start_queue = queue->start_queue;
    f.queue_vehicles = queue->vehicle_count;
  } else {
    f.missing |= kMissingQueue;
  }
  if (auto tt = tt_wz_for(k, oracle_queue_[w])) {
    f.tt_wz = *tt;
  } else {
    f.missing |= kMissingTtWz;
  }
  windows_.push_back(f);

  for (VehicleId id : rsu1_exits_[w]) {
    auto& t = tracks_[static_cast<std::size_t>(id)];
    t.live = false;
    t.retired = true;
    std::vector<TrajectoryPoint>().swap(t.points);
  }
  std::vector<VehicleId>().swap(rsu1_exits_[w]);
  for (auto& s : seg_[w]) std::vector<double>().swap(s);
  std::vector<double>().swap(acc_[w]);
  oracle_queue_[w].reset();
}

std::vector<FeatureWindow> FeatureAggregator::result() const {
  if (static_cast<int>(windows_.size()) != window_count_) {
    throw std::logic_error("feature aggregation incomplete");
  }
  std::vector<FeatureWindow> out = windows_;
  std::array<double, kSegmentCount> seg_fill{};
  for (int i = 2; i <= kRsuCount; ++i) {
    seg_fill[static_cast<std::size_t>(i - 2)] = free_flow_segment_time(geometry_, rsus_, i);
  }
  double acc_fill = 0.0;
  double tt_fill = free_flow_wz_time(geometry_);
  for (auto& f : out) {
    for (std::size_t s = 0; s < kSegmentCount; ++s) {
      if (f.missing & (1u << s)) {
        f.tt_seg[s] = seg_fill[s];
      } else {
        seg_fill[s] = f.tt_seg[s];
      }
    }
    if (f.missing & kMissingAccel) {
      f.wz_end_acc = acc_fill;
    } else {
      acc_fill = f.wz_end_acc;
    }
    if (f.missing & kMissingTtWz) {
      f.tt_wz = tt_fill;
    } else {
      tt_fill = f.tt_wz;
    }
  }
  return out;
}

std::size_t FeatureAggregator::tracked_vehicles() const {
  return static_cast<std::size_t>(
      std::count_if(tracks_.begin(), tracks_.end(), [](const Track& t) { return t.live; }));
}

std::uint64_t replication_seed(std::uint64_t base_seed, int month, int replication) {
  auto rng = make_rng(base_seed, 1000u * static_cast<std::uint64_t>(month) +
                                     static_cast<std::uint64_t>(replication));
  return rng();
}

int windows_per_day(const SimConfig& sim, double window_seconds) {
  const double n = sim.duration_hours * units::kSecondsPerHour / window_seconds;
  const auto rounded = std::llround(n);
  if (rounded < 1 || std::abs(n - static_cast<double>(rounded)) > 1e-9) {
    throw std::invalid_argument("sim.duration_hours must be a whole number of 5-minute windows");
  }
  return static_cast<int>(rounded);
}

RawSink::RawSink(const std::filesystem::path& stem)
    : v2i_(passages_path(stem), trajectories_path(stem)), queue_(queue_path(stem)) {
  queue_.row(kQueueHeader);
}

std::filesystem::path RawSink::passages_path(const std::filesystem::path& stem) {
  return stem.string() + "_passages.csv";
}
std::filesystem::path RawSink::trajectories_path(const std::filesystem::path& stem) {
  return stem.string() + "_trajectories.csv";
}
std::filesystem::path RawSink::queue_path(const std::filesystem::path& stem) {
  return stem.string() + "_queue.csv";
}

void RawSink::write_queue(int k, const std::optional<QueueInfo>& q) {
  if (q) {
    queue_.row(k, 1, q->q_length, q->start_queue, q->head_position, q->tail_position,
               q->vehicle_count);
  } else {
    queue_.row(k, 0, 0.0, 0.0, 0.0, 0.0, 0);
  }
}

ReplicationResult run_replication(const ReplicationSpec& spec, RawSink* sink) {
  const auto& cfg = spec.sim;
  const int windows = windows_per_day(cfg, spec.features.window_seconds);
  const auto steps_per_window =
      std::llround(spec.features.window_seconds / cfg.dt);
  if (std::abs(static_cast<double>(steps_per_window) * cfg.dt - spec.features.window_seconds) > 1e-9) {
    throw std::invalid_argument("sim.dt must divide the 300 s feature window");
  }

  Rng arrival_rng = make_rng(cfg.seed, 1);
  auto arrivals = generate_day(spec.profile, cfg.duration_hours, cfg.geometry.lanes_upstream,
                               arrival_rng);
  ReplicationResult result;
  auto& stats = result.stats;
  stats.month = spec.month;
  stats.replication = spec.replication;
  stats.seed = cfg.seed;
  stats.arrivals = arrivals.size();

  Simulation sim(cfg, std::move(arrivals));
  V2iNetwork net(spec.rsus);
  FeatureAggregator agg(spec.month, spec.replication, windows, cfg.geometry, spec.rsus,
                        spec.features);

  auto capture_queue = [&](int k) {
    auto q = detect_queue(snapshot_of(sim.world(), cfg.geometry), spec.features.queue, cfg.geometry);
    if (q) stats.max_queue_length = std::max(stats.max_queue_length, q->q_length);
    if (sink) sink->write_queue(k, q);
    agg.set_oracle_queue(k, std::move(q));
  };

  capture_queue(0);
  while (!sim.finished()) {
    sim.step();
    net.observe_step(sim, sim.is_log_step());
    auto batch = net.drain();
    if (sink) sink->write(batch);
    agg.add_passages(batch.passages);
    agg.add_received(batch.received);
    if (sim.step_index() % steps_per_window == 0) {
      const int k = static_cast<int>(sim.step_index() / steps_per_window) - 1;
      agg.finish_window(k);
      if (k + 1 < windows) capture_queue(k + 1);
    }
  }

  stats.entered = sim.vehicles_entered();
  stats.exited = sim.vehicles_exited();
  stats.present_at_end = sim.vehicles_present();
  stats.waiting_at_end = sim.vehicles_waiting_to_enter();
  stats.points_logged = net.obus().points_logged;
  stats.points_received = net.points_drained();
  stats.points_lost_on_exit = net.obus().points_lost_on_exit;
  stats.points_buffered_at_end = net.obus().points_buffered();
  result.windows = agg.result();
  return result;
}

std::vector<FeatureWindow> features_from_dumps(const std::filesystem::path& stem, int month,
                                               int replication, int window_count,
                                               const RoadGeometry& geometry,
                                               std::vector<Rsu> rsus, const FeatureParams& params) {
  const auto passages = read_passages_csv(RawSink::passages_path(stem));
  const auto received = read_trajectories_csv(RawSink::trajectories_path(stem));
  const auto qpath = RawSink::queue_path(stem);
  const auto qtable = csv::read(qpath);
  csv::expect_header(qtable, kQueueHeader, qpath);

  std::vector<std::optional<QueueInfo>> queues(static_cast<std::size_t>(window_count));
  std::vector<bool> seen(static_cast<std::size_t>(window_count), false);
  for (const auto& row : qtable.rows) {
    const auto k = csv::parse_int(row[0]);
    if (k < 0 || k >= window_count) throw csv::ParseError(qpath.string() + ": window out of range");
    seen[static_cast<std::size_t>(k)] = true;
    if (csv::parse_int(row[1]) == 0) continue;
    QueueInfo q;
    q.q_length = csv::parse_double(row[2]);
    q.start_queue = csv::parse_double(row[3]);
    q.head_position = csv::parse_double(row[4]);
    q.tail_position = csv::parse_double(row[5]);
    q.vehicle_count = static_cast<int>(csv::parse_int(row[6]));
    queues[static_cast<std::size_t>(k)] = std::move(q);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw csv::ParseError(qpath.string() + ": missing oracle queue rows");
  }

  FeatureAggregator agg(month, replication, window_count, geometry, std::move(rsus), params);
  std::size_t ip = 0;
  std::size_t ir = 0;
  for (int k = 0; k < window_count; ++k) {
    const double end = static_cast<double>(k + 1) * params.window_seconds;
    const std::size_t jp = ip;
    while (ip < passages.size() && passages[ip].timestamp <= end) ++ip;
    const std::size_t jr = ir;
    while (ir < received.size() && received[ir].received_at <= end) ++ir;
    agg.add_passages(std::span(passages).subspan(jp, ip - jp));
    agg.add_received(std::span(received).subspan(jr, ir - jr));
    agg.set_oracle_queue(k, queues[static_cast<std::size_t>(k)]);
    agg.finish_window(k);
  }
  return agg.result();
}

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureWindow> rows) {
  csv::Writer w(path);
  w.row(feature_header());
  for (const auto& f : rows) {
    std::vector<std::string> fields = {std::to_string(f.month), std::to_string(f.replication),
                                       std::to_string(f.t)};
    for (double v : f.tt_seg) fields.push_back(csv::format(v));
    for (double v : {f.upstream_flow, f.downstream_flow, f.wz_end_acc, f.q_length, f.start_queue,
                     f.tt_wz}) {
      fields.push_back(csv::format(v));
    }
    fields.push_back(std::to_string(f.missing));
    fields.push_back(std::to_string(f.queue_vehicles));
    w.row(fields);
  }
}

std::vector<FeatureWindow> read_features_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  csv::expect_header(table, feature_header(), path);
  std::vector<FeatureWindow> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    FeatureWindow f;
    std::size_t c = 0;
    f.month = static_cast<int>(csv::parse_int(row[c++]));
    f.replication = static_cast<int>(csv::parse_int(row[c++]));
    f.t = static_cast<int>(csv::parse_int(row[c++]));
    for (auto& v : f.tt_seg) v = csv::parse_double(row[c++]);
    f.upstream_flow = csv::parse_double(row[c++]);
    f.downstream_flow = csv::parse_double(row[c++]);
    f.wz_end_acc = csv::parse_double(row[c++]);
    f.q_length = csv::parse_double(row[c++]);
    f.start_queue = csv::parse_double(row[c++]);
    f.tt_wz = csv::parse_double(row[c++]);
    f.missing = static_cast<std::uint32_t>(csv::parse_int(row[c++]));
    f.queue_vehicles = static_cast<int>(csv::parse_int(row[c++]));
    out.push_back(f);
  }
  return out;
}

}  // namespace wztt
