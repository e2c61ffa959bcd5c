#include "wztt/sim.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace wztt {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(field) + ": " + what);
}

// IDM in mph/s for an explicit desired speed; gap in miles (kInf = free road).
double idm_mph(double gap, double speed, double leader_speed, double desired_speed,
               const DriverParams& d, double dt, double emergency_decel) {
  double accel;
  if (gap <= 0.0) {
    accel = -emergency_decel;
  } else {
    const double si = idm_acceleration<double>(
        std::isfinite(gap) ? units::miles_to_meters(gap) : kInf, units::mph_to_mps(speed),
        units::mph_to_mps(speed - leader_speed), units::mph_to_mps(desired_speed),
        d.time_headway, units::miles_to_meters(d.min_gap), units::mph_to_mps(d.max_accel),
        units::mph_to_mps(d.comfort_decel));
    accel = units::mps_to_mph(si);
  }
  return std::max(accel, -speed / dt);
}

// Index of the first vehicle strictly upstream of `position` in a lane sorted
// by descending position.
std::size_t follower_index(const std::vector<VehicleState>& lane, double position) {
  auto it = std::partition_point(lane.begin(), lane.end(),
                                 [&](const VehicleState& v) { return v.position >= position; });
  return static_cast<std::size_t>(it - lane.begin());
}

std::string describe(const VehicleState& v) {
  std::ostringstream os;
  os << "{id=" << v.vehicle_id << " lane=" << v.lane << " pos=" << v.position
     << " prev=" << v.previous_position << " speed=" << v.speed << " accel=" << v.acceleration
     << "}";
  return os.str();
}

}  // namespace

void RoadGeometry::validate() const {
  require(upstream_length > 0, "geometry.upstream_length", "must be > 0");
  require(upstream_length >= 3.0, "geometry.upstream_length",
          "must be >= 3.0 mi to hold every roadside unit plus queue headroom");
  require(wz_length > 0, "geometry.wz_length", "must be > 0");
  require(downstream_length > 0, "geometry.downstream_length", "must be > 0");
  require(lanes_wz >= 1, "geometry.lanes_wz", "must be >= 1");
  require(lanes_wz < lanes_upstream, "geometry.lanes_wz", "must be < lanes_upstream");
  require(speed_limit_normal > 0, "geometry.speed_limit_normal", "must be > 0");
  require(speed_limit_wz > 0, "geometry.speed_limit_wz", "must be > 0");
  require(arrow_panel_pos > 0, "geometry.arrow_panel_pos", "must be > 0");
  require(vms_pos > arrow_panel_pos, "geometry.vms_pos", "must be > arrow_panel_pos");
  require(vms_pos < upstream_length, "geometry.vms_pos", "must lie on the network");
}

void DriverParams::validate() const {
  require(desired_speed > 0, "driver.desired_speed", "must be > 0");
  require(time_headway > 0, "driver.time_headway", "must be > 0");
  require(min_gap > 0, "driver.min_gap", "must be > 0");
  require(max_accel > 0, "driver.max_accel", "must be > 0");
  require(comfort_decel > 0, "driver.comfort_decel", "must be > 0");
  require(early_merge_prob >= 0 && early_merge_prob <= 1, "driver.early_merge_prob",
          "must be in [0, 1]");
  require(merge_gap_min > 0, "driver.merge_gap_min", "must be > 0");
}

void SimConfig::validate() const {
  require(dt > 0 && dt <= 1, "sim.dt", "must be in (0, 1]");
  require(duration_hours > 0, "sim.duration_hours", "must be > 0");
  require(vehicle_length > 0, "sim.vehicle_length", "must be > 0");
  require(desired_speed_spread >= 0 && desired_speed_spread < 1, "sim.desired_speed_spread",
          "must be in [0, 1)");
  require(emergency_decel > 0, "sim.emergency_decel", "must be > 0");
  require(log_interval >= dt, "sim.log_interval", "must be >= dt");
  const double ratio = log_interval / dt;
  require(std::abs(ratio - std::round(ratio)) < 1e-9, "sim.log_interval",
          "must be a multiple of dt");
  require(penetration_rate >= 0 && penetration_rate <= 1, "penetration_rate", "must be in [0, 1]");
  geometry.validate();
  driver.validate();
}

std::int64_t SimConfig::total_steps() const {
  return std::llround(duration_hours * units::kSecondsPerHour / dt);
}

std::int64_t SimConfig::steps_per_log() const {
  return std::max<std::int64_t>(1, std::llround(log_interval / dt));
}

std::size_t World::vehicle_count() const {
  std::size_t n = 0;
  for (const auto& lane : lanes) n += lane.size();
  return n;
}

CollisionError::CollisionError(const VehicleState& l, const VehicleState& f, double time)
    : std::runtime_error("collision at t=" + std::to_string(time) + "s: leader " + describe(l) +
                         " follower " + describe(f)),
      leader(l),
      follower(f) {}

double car_following_accel(double gap, double speed, double leader_speed,
                           const DriverParams& driver, double dt, double emergency_decel) {
  return idm_mph(gap, speed, leader_speed, driver.desired_speed, driver, dt, emergency_decel);
}

double effective_desired_speed(double own_desired, double position, const RoadGeometry& g) {
  if (position >= g.wz_start() - g.vms_pos && position <= g.wz_end()) {
    return std::min(own_desired, g.speed_limit_wz);
  }
  return own_desired;
}

bool waiting_at_taper(const VehicleState& v, const RoadGeometry& g, const DriverParams& d) {
  if (v.lane < g.lanes_wz) return false;
  const double to_taper = g.wz_start() - v.position;
  return to_taper > 0 && to_taper <= 3.0 * d.min_gap && v.speed < 2.0;
}

int merge_step(World& world, const RoadGeometry& g, const DriverParams& d, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double safe_decel = 2.0 * d.comfort_decel;
  int merges = 0;
  for (int lane = g.lanes_wz; lane < g.lanes_upstream; ++lane) {
    auto& src = world.lanes[static_cast<std::size_t>(lane)];
    auto& dst = world.lanes[static_cast<std::size_t>(lane - 1)];
    std::size_t i = 0;
    while (i < src.size()) {
      const VehicleState& v = src[i];
      const double to_taper = g.wz_start() - v.position;
      if (to_taper <= 0.0 || to_taper > g.vms_pos) {
        ++i;
        continue;
      }
      const bool mandatory = to_taper <= g.arrow_panel_pos;
      if (!mandatory && !(uniform(rng) < d.early_merge_prob)) {
        ++i;
        continue;
      }
      // Past the arrow panel the accepted gap shrinks with speed, down to
      // min_gap for vehicles crawling or stopped at the taper.
      double required = d.merge_gap_min;
      if (mandatory) {
        const double crawl = std::min(1.0, v.speed / g.speed_limit_wz);
        required = std::max(d.min_gap, d.merge_gap_min * crawl);
      }
      if (waiting_at_taper(v, g, d)) required = d.min_gap;
      const std::size_t j = follower_index(dst, v.position);
      const VehicleState* leader = j > 0 ? &dst[j - 1] : nullptr;
      const VehicleState* follower = j < dst.size() ? &dst[j] : nullptr;
      const double lead_gap = leader ? leader->position - leader->vehicle_length - v.position : kInf;
      const double follow_gap =
          follower ? v.position - v.vehicle_length - follower->position : kInf;
      bool accept = lead_gap >= required && follow_gap >= required;
      if (accept && follower) {
        const double v0 = effective_desired_speed(follower->desired_speed, follower->position, g);
        accept = idm_mph(follow_gap, follower->speed, v.speed, v0, d, kDefaultDt, kInf) >=
                 -safe_decel;
      }
      if (accept && leader) {
        const double v0 = effective_desired_speed(v.desired_speed, v.position, g);
        accept = idm_mph(lead_gap, v.speed, leader->speed, v0, d, kDefaultDt, kInf) >= -safe_decel;
      }
      if (!accept) {
        ++i;
        continue;
      }
      VehicleState moved = v;
      moved.lane = lane - 1;
      dst.insert(dst.begin() + static_cast<std::ptrdiff_t>(j), moved);
      src.erase(src.begin() + static_cast<std::ptrdiff_t>(i));
      ++merges;
    }
  }
  return merges;
}

StepOutcome advance(World& world, const SimConfig& cfg, Rng& rng, double time_after_step) {
  const RoadGeometry& g = cfg.geometry;
  const DriverParams& d = cfg.driver;
  merge_step(world, g, d, rng);

  std::vector<std::vector<double>> accel(world.lanes.size());
  for (std::size_t l = 0; l < world.lanes.size(); ++l) {
    const auto& lane = world.lanes[l];
    auto& acc = accel[l];
    acc.resize(lane.size());
    const bool closing = static_cast<int>(l) >= g.lanes_wz;
    for (std::size_t i = 0; i < lane.size(); ++i) {
      const VehicleState& v = lane[i];
      const double v0 = effective_desired_speed(v.desired_speed, v.position, g);
      double a;
      if (i == 0) {
        a = idm_mph(kInf, v.speed, v.speed, v0, d, cfg.dt, cfg.emergency_decel);
      } else {
        const VehicleState& lead = lane[i - 1];
        a = idm_mph(lead.position - lead.vehicle_length - v.position, v.speed, lead.speed, v0, d,
                    cfg.dt, cfg.emergency_decel);
      }
      if (closing && v.position < g.wz_start()) {
        a = std::min(a, idm_mph(g.wz_start() - v.position, v.speed, 0.0, v0, d, cfg.dt,
                                cfg.emergency_decel));
      }
      acc[i] = a;
    }
  }

  // Courtesy yielding: past the arrow panel, the nearest target-lane vehicle
  // behind a closing-lane vehicle treats it as a leader when it can stop
  // comfortably behind it.
  for (int l = g.lanes_wz; l < g.lanes_upstream; ++l) {
    const auto& src = world.lanes[static_cast<std::size_t>(l)];
    const auto& dst = world.lanes[static_cast<std::size_t>(l - 1)];
    auto& dst_accel = accel[static_cast<std::size_t>(l - 1)];
    std::size_t last_yielder = dst.size();
    for (const VehicleState& c : src) {
      const double to_taper = g.wz_start() - c.position;
      if (to_taper <= 0.0) continue;
      if (to_taper > g.arrow_panel_pos) break;
      const std::size_t j = follower_index(dst, c.position);
      if (j >= dst.size() || j == last_yielder) continue;
      const VehicleState& f = dst[j];
      const double gap = c.position - c.vehicle_length - f.position;
      const double room = units::miles_to_meters(gap - d.min_gap);
      const double v = units::mph_to_mps(f.speed);
      if (gap <= 0 || room <= 0 || v * v > 2.0 * units::mph_to_mps(d.comfort_decel) * room) continue;
      const double v0 = effective_desired_speed(f.desired_speed, f.position, g);
      dst_accel[j] = std::min(dst_accel[j], idm_mph(gap, f.speed, c.speed, v0, d, cfg.dt,
                                                    cfg.emergency_decel));
      last_yielder = j;
    }
  }

  for (std::size_t l = 0; l < world.lanes.size(); ++l) {
    auto& lane = world.lanes[l];
    for (std::size_t i = 0; i < lane.size(); ++i) {
      VehicleState& v = lane[i];
      const double a = accel[l][i];
      const double new_speed = std::max(0.0, v.speed + a * cfg.dt);
      v.previous_position = v.position;
      v.position += 0.5 * (v.speed + new_speed) * cfg.dt / units::kSecondsPerHour;
      v.speed = new_speed;
      v.acceleration = a;
    }
    for (std::size_t i = 1; i < lane.size(); ++i) {
      if (lane[i - 1].position - lane[i].position <= lane[i - 1].vehicle_length) {
        throw CollisionError(lane[i - 1], lane[i], time_after_step);
      }
    }
  }

  StepOutcome outcome;
  const double end = g.network_length();
  for (auto& lane : world.lanes) {
    std::size_t n = 0;
    while (n < lane.size() && lane[n].position > end) ++n;
    if (n == 0) continue;
    outcome.exited.insert(outcome.exited.end(), lane.begin(),
                          lane.begin() + static_cast<std::ptrdiff_t>(n));
    lane.erase(lane.begin(), lane.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return outcome;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

Simulation::Simulation(SimConfig config, std::vector<Arrival> arrivals)
    : config_(std::move(config)),
      world_(config_.geometry.lanes_upstream),
      arrivals_(std::move(arrivals)),
      entry_queues_(static_cast<std::size_t>(config_.geometry.lanes_upstream)),
      entry_heads_(static_cast<std::size_t>(config_.geometry.lanes_upstream), 0),
      pending_(static_cast<std::size_t>(config_.geometry.lanes_upstream)),
      behaviour_rng_(make_rng(config_.seed, 2)),
      vehicle_rng_(make_rng(config_.seed, 3)) {
  config_.validate();
  std::stable_sort(arrivals_.begin(), arrivals_.end(),
                   [](const Arrival& a, const Arrival& b) { return a.time < b.time; });
  for (const auto& a : arrivals_) {
    if (a.lane < 0 || a.lane >= config_.geometry.lanes_upstream) {
      throw std::invalid_argument("arrival lane out of range");
    }
  }
}

std::size_t Simulation::vehicles_waiting_to_enter() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < entry_queues_.size(); ++l) {
    n += entry_queues_[l].size() - entry_heads_[l];
  }
  return n;
}

const StepOutcome& Simulation::step() {
  ++step_index_;
  last_ = advance(world_, config_, behaviour_rng_, time());
  n_exited_ += last_.exited.size();
  admit_arrivals();
  return last_;
}

void Simulation::admit_arrivals() {
  const double now = time();
  while (next_arrival_ < arrivals_.size() && arrivals_[next_arrival_].time <= now) {
    const Arrival& a = arrivals_[next_arrival_++];
    entry_queues_[static_cast<std::size_t>(a.lane)].push_back(a);
  }
  entered_.clear();
  const DriverParams& d = config_.driver;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (std::size_t l = 0; l < entry_queues_.size(); ++l) {
    auto& queue = entry_queues_[l];
    auto& head = entry_heads_[l];
    if (head >= queue.size()) continue;

    // Driver attributes are drawn once, at the first admission attempt.
    auto& lane = world_.lanes[l];
    auto& pend = pending_[l];
    if (!pend.drawn) {
      const double spread = config_.desired_speed_spread;
      pend.desired = d.desired_speed * (1.0 + spread * (2.0 * uniform(vehicle_rng_) - 1.0));
      pend.equipped = uniform(vehicle_rng_) < config_.penetration_rate;
      pend.drawn = true;
    }
    double speed = pend.desired;
    if (!lane.empty()) {
      const VehicleState& last = lane.back();
      const double gap = last.position - last.vehicle_length;
      if (gap <= d.min_gap) continue;
      if (idm_mph(gap, speed, last.speed, pend.desired, d, config_.dt, kInf) < -d.comfort_decel) {
        speed = std::min(pend.desired, last.speed);
        if (idm_mph(gap, speed, last.speed, pend.desired, d, config_.dt, kInf) < -d.comfort_decel) {
          continue;
        }
      }
    }
    VehicleState v;
    v.vehicle_id = next_id_++;
    v.lane = static_cast<int>(l);
    v.position = 0.0;
    v.previous_position = 0.0;
    v.speed = speed;
    v.acceleration = 0.0;
    v.vehicle_length = config_.vehicle_length;
    v.desired_speed = pend.desired;
    v.entry_time = now;
    v.equipped = pend.equipped;
    lane.push_back(v);
    entered_.push_back(v);
    ++n_entered_;
    ++head;
    pend.drawn = false;
    if (head == queue.size()) {
      queue.clear();
      head = 0;
    }
  }
}

}  // namespace wztt
