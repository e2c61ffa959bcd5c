#include "wztt/v2i.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace wztt {
namespace {

const std::vector<std::string> kPassageHeader = {"rsu_id", "vehicle_id", "timestamp"};
const std::vector<std::string> kTrajectoryHeader = {"vehicle_id", "time",          "position",
                                                    "speed",      "accel",         "receiving_rsu",
                                                    "received_at"};

// Index into the id-ordered RSU vector of the o-th unit a vehicle meets.
std::size_t upstream_order(std::size_t o) { return kRsuCount - 1 - o; }

void write_passage(csv::Writer& w, const PassageRecord& p) {
  w.row(p.rsu_id, p.vehicle_id, p.timestamp);
}

void write_upload(csv::Writer& w, const ReceivedTrajectory& r) {
  for (const auto& pt : r.points) {
    w.row(r.vehicle_id, pt.time, pt.position, pt.speed, pt.acceleration, r.rsu_id, r.received_at);
  }
}

}  // namespace

std::vector<Rsu> standard_rsu_layout(const RoadGeometry& g, double coverage_radius) {
  std::vector<double> positions(kRsuCount);
  positions[0] = g.wz_end();
  for (int k = 2; k <= kRsuCount; ++k) positions[k - 1] = g.wz_start() - 0.2 * (k - 2);
  return rsu_layout(positions, coverage_radius, g);
}

std::vector<Rsu> rsu_layout(std::span<const double> positions, double coverage_radius,
                            const RoadGeometry& g) {
  if (positions.size() != kRsuCount) {
    throw std::invalid_argument("rsu.positions must list exactly 12 positions");
  }
  if (!(coverage_radius > 0)) throw std::invalid_argument("rsu.coverage_radius must be > 0");
  std::vector<Rsu> rsus(kRsuCount);
  for (int k = 1; k <= kRsuCount; ++k) {
    const double x = positions[static_cast<std::size_t>(k - 1)];
    if (!(x - coverage_radius > 0) || !(x < g.network_length())) {
      throw std::invalid_argument("rsu.positions: RSU " + std::to_string(k) +
                                  " coverage must lie on the network");
    }
    if (k > 1 && !(x < positions[static_cast<std::size_t>(k - 2)])) {
      throw std::invalid_argument("rsu.positions must decrease strictly from RSU 1 to RSU 12");
    }
    rsus[static_cast<std::size_t>(k - 1)] = Rsu{k, x, coverage_radius, {}, {}};
  }
  return rsus;
}

double distance_to_rsu1(std::span<const Rsu> rsus, int id) {
  return rsus[0].position - rsus[static_cast<std::size_t>(id - 1)].position;
}

ObuState& ObuTable::at(VehicleId id) {
  if (id >= slots_.size()) slots_.resize(static_cast<std::size_t>(id) + 1);
  auto& s = slots_[static_cast<std::size_t>(id)];
  if (!s.active) {
    s.active = true;
    s.buffer.vehicle_id = id;
  }
  return s;
}

const ObuState* ObuTable::find(VehicleId id) const {
  if (id >= slots_.size() || !slots_[static_cast<std::size_t>(id)].active) return nullptr;
  return &slots_[static_cast<std::size_t>(id)];
}

void ObuTable::retire(VehicleId id) {
  if (id >= slots_.size()) return;
  auto& s = slots_[static_cast<std::size_t>(id)];
  points_lost_on_exit += s.buffer.points.size();
  s = ObuState{};
}

std::size_t ObuTable::points_buffered() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.buffer.points.size();
  return n;
}

void log_trajectories(const World& world, ObuTable& obus, double time) {
  for (const auto& lane : world.lanes) {
    for (const auto& v : lane) {
      if (!v.equipped) continue;
      auto& buf = obus.at(v.vehicle_id).buffer.points;
      if (!buf.empty() && !(buf.back().time < time)) continue;
      buf.push_back({time, v.position, v.speed, v.acceleration});
      ++obus.points_logged;
    }
  }
}

void detect_and_transmit(std::span<const VehicleState> vehicles, std::vector<Rsu>& rsus,
                         ObuTable& obus, double t_prev, double t_now) {
  for (const auto& v : vehicles) {
    if (!v.equipped) continue;
    auto& obu = obus.at(v.vehicle_id);
    while (obu.coverage_entered < kRsuCount) {
      auto& rsu = rsus[upstream_order(obu.coverage_entered)];
      if (v.position < rsu.coverage_start()) break;
      if (!obu.buffer.points.empty()) {
        rsu.received.push_back({rsu.rsu_id, v.vehicle_id, t_now, std::move(obu.buffer.points)});
        obu.buffer.points.clear();
      }
      ++obu.coverage_entered;
    }
    while (obu.passages_made < kRsuCount) {
      auto& rsu = rsus[upstream_order(obu.passages_made)];
      if (v.position < rsu.position) break;
      const double moved = v.position - v.previous_position;
      double t = t_now;
      if (moved > 0 && v.previous_position < rsu.position) {
        t = t_prev + (t_now - t_prev) * (rsu.position - v.previous_position) / moved;
      }
      rsu.passages.push_back({rsu.rsu_id, v.vehicle_id, t});
      ++obu.passages_made;
    }
  }
}

std::optional<TrajectoryPoint> interpolate_at(std::span<const TrajectoryPoint> traj, double time) {
  if (traj.empty() || time < traj.front().time || time > traj.back().time) return std::nullopt;
  auto it = std::lower_bound(traj.begin(), traj.end(), time,
                             [](const TrajectoryPoint& p, double t) { return p.time < t; });
  if (it->time == time) return *it;
  const auto& b = *it;
  const auto& a = *std::prev(it);
  const double w = (time - a.time) / (b.time - a.time);
  return TrajectoryPoint{time, a.position + w * (b.position - a.position),
                         a.speed + w * (b.speed - a.speed),
                         a.acceleration + w * (b.acceleration - a.acceleration)};
}

std::optional<double> crossing_time(std::span<const TrajectoryPoint> traj, double position) {
  if (traj.empty() || traj.front().position > position) return std::nullopt;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (traj[i].position < position) continue;
    if (i == 0 || traj[i].position == position) return traj[i].time;
    const auto& a = traj[i - 1];
    const auto& b = traj[i];
    return a.time + (b.time - a.time) * (position - a.position) / (b.position - a.position);
  }
  return std::nullopt;
}

std::vector<ReconstructedVehicle> reconstruct_positions(std::span<const ReceivedTrajectory> received,
                                                        double query_time) {
  std::map<VehicleId, std::vector<TrajectoryPoint>> by_vehicle;
  for (const auto& r : received) {
    auto& pts = by_vehicle[r.vehicle_id];
    pts.insert(pts.end(), r.points.begin(), r.points.end());
  }
  std::vector<ReconstructedVehicle> out;
  for (auto& [id, pts] : by_vehicle) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.time < b.time; });
    if (auto p = interpolate_at(pts, query_time)) out.push_back({id, p->position, p->speed});
  }
  std::sort(out.begin(), out.end(), [](const ReconstructedVehicle& a, const ReconstructedVehicle& b) {
    return a.position < b.position || (a.position == b.position && a.vehicle_id < b.vehicle_id);
  });
  return out;
}

V2iNetwork::V2iNetwork(std::vector<Rsu> rsus) : rsus_(std::move(rsus)) {
  if (rsus_.size() != kRsuCount) throw std::invalid_argument("expected 12 roadside units");
}

void V2iNetwork::observe_step(const Simulation& sim, bool log_tick) {
  const double t_now = sim.time();
  const double t_prev = t_now - sim.config().dt;
  if (log_tick) log_trajectories(sim.world(), obus_, t_now);
  for (const auto& lane : sim.world().lanes) detect_and_transmit(lane, rsus_, obus_, t_prev, t_now);
  const auto& exited = sim.last_outcome().exited;
  detect_and_transmit(exited, rsus_, obus_, t_prev, t_now);
  for (const auto& v : exited) obus_.retire(v.vehicle_id);
}

std::size_t V2iNetwork::points_at_rsus() const {
  std::size_t n = 0;
  for (const auto& r : rsus_) {
    for (const auto& u : r.received) n += u.points.size();
  }
  return n;
}

V2iNetwork::Drained V2iNetwork::drain() {
  Drained out;
  for (auto& r : rsus_) {
    out.passages.insert(out.passages.end(), r.passages.begin(), r.passages.end());
    r.passages.clear();
    for (auto& u : r.received) {
      points_drained_ += u.points.size();
      out.received.push_back(std::move(u));
    }
    r.received.clear();
  }
  auto by_time = [](const auto& a, const auto& b, double ta, double tb) {
    return ta < tb || (ta == tb && (a.rsu_id < b.rsu_id ||
                                    (a.rsu_id == b.rsu_id && a.vehicle_id < b.vehicle_id)));
  };
  std::sort(out.passages.begin(), out.passages.end(),
            [&](const PassageRecord& a, const PassageRecord& b) {
              return by_time(a, b, a.timestamp, b.timestamp);
            });
  std::sort(out.received.begin(), out.received.end(),
            [&](const ReceivedTrajectory& a, const ReceivedTrajectory& b) {
              return by_time(a, b, a.received_at, b.received_at);
            });
  return out;
}

void write_passages_csv(const std::filesystem::path& path, std::span<const PassageRecord> passages) {
  csv::Writer w(path);
  w.row(kPassageHeader);
  for (const auto& p : passages) write_passage(w, p);
}

void write_trajectories_csv(const std::filesystem::path& path,
                            std::span<const ReceivedTrajectory> received) {
  csv::Writer w(path);
  w.row(kTrajectoryHeader);
  for (const auto& r : received) write_upload(w, r);
}

V2iCsvSink::V2iCsvSink(const std::filesystem::path& passages,
                       const std::filesystem::path& trajectories)
    : passages_(passages), trajectories_(trajectories) {
  passages_.row(kPassageHeader);
  trajectories_.row(kTrajectoryHeader);
}

void V2iCsvSink::write(const V2iNetwork::Drained& batch) {
  for (const auto& p : batch.passages) write_passage(passages_, p);
  for (const auto& r : batch.received) write_upload(trajectories_, r);
}

std::vector<PassageRecord> read_passages_csv(const std::filesystem::path& path) {
  std::vector<PassageRecord> out;
  csv::for_each_row(path, kPassageHeader, [&](std::span<const std::string_view> row) {
    out.push_back({static_cast<int>(csv::parse_int(row[0])),
                   static_cast<VehicleId>(csv::parse_int(row[1])), csv::parse_double(row[2])});
  });
  return out;
}

std::vector<ReceivedTrajectory> read_trajectories_csv(const std::filesystem::path& path) {
  std::vector<ReceivedTrajectory> out;
  csv::for_each_row(path, kTrajectoryHeader, [&](std::span<const std::string_view> row) {
    const auto vehicle = static_cast<VehicleId>(csv::parse_int(row[0]));
    const int rsu = static_cast<int>(csv::parse_int(row[5]));
    const double received_at = csv::parse_double(row[6]);
    if (out.empty() || out.back().vehicle_id != vehicle || out.back().rsu_id != rsu ||
        out.back().received_at != received_at) {
      out.push_back({rsu, vehicle, received_at, {}});
    }
    out.back().points.push_back({csv::parse_double(row[1]), csv::parse_double(row[2]),
                                 csv::parse_double(row[3]), csv::parse_double(row[4])});
  });
  return out;
}

}  // namespace wztt
