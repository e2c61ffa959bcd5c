#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wztt/units.hpp"

namespace wztt {

using Rng = std::mt19937_64;
using VehicleId = std::uint64_t;

/// Two-lane freeway with a one-lane-closed work zone. Network coordinates run
/// from the entry (0) downstream; the work zone starts at `upstream_length`.
struct RoadGeometry {
  double upstream_length = 5.0;    // mi, entry to work-zone start
  double wz_length = 2.0;          // mi
  double downstream_length = 0.5;  // mi, work-zone end to network exit
  int lanes_upstream = 2;
  int lanes_wz = 1;
  double speed_limit_normal = 65.0;  // mph
  double speed_limit_wz = 45.0;      // mph
  double arrow_panel_pos = 0.1;      // mi upstream of work-zone start
  double vms_pos = 0.7;              // mi upstream of work-zone start

  double wz_start() const { return upstream_length; }
  double wz_end() const { return upstream_length + wz_length; }
  double network_length() const { return wz_end() + downstream_length; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct DriverParams {
  double desired_speed = 65.0;                                  // mph
  double time_headway = 1.5;                                    // s
  double min_gap = units::meters_to_miles(2.0);                 // mi
  double max_accel = units::mps_to_mph(1.4);                    // mph/s
  double comfort_decel = units::mps_to_mph(2.0);                // mph/s
  double early_merge_prob = 0.02;                               // per step past the VMS
  double merge_gap_min = 0.008;                                 // mi

  void validate() const;
};

struct SimConfig {
  double dt = 0.5;               // s
  double duration_hours = 24.0;  // h
  std::uint64_t seed = 1;
  RoadGeometry geometry;
  DriverParams driver;
  double vehicle_length = units::meters_to_miles(4.5);  // mi
  double desired_speed_spread = 0.10;  // uniform +/- fraction around desired_speed
  double emergency_decel = 20.0;       // mph/s, used when the gap is non-positive
  double log_interval = 1.0;           // s, OBU / trajectory logging period
  double penetration_rate = 1.0;       // fraction of vehicles carrying an OBU

  void validate() const;
  std::int64_t total_steps() const;
  std::int64_t steps_per_log() const;
};

struct VehicleState {
  VehicleId vehicle_id = 0;
  int lane = 0;
  double position = 0.0;       // mi from network entry (front bumper)
  double speed = 0.0;          // mph
  double acceleration = 0.0;   // mph/s, last applied
  double vehicle_length = 0.0; // mi
  double desired_speed = 0.0;  // mph, this driver's free-road target
  double previous_position = 0.0;
  double entry_time = 0.0;
  bool equipped = true;
};

/// Vehicles per lane, each lane ordered by descending position (index 0 is
/// the most downstream vehicle).
struct World {
  std::vector<std::vector<VehicleState>> lanes;

  explicit World(int lane_count = 2) : lanes(static_cast<std::size_t>(lane_count)) {}

  std::size_t vehicle_count() const;
  bool empty() const { return vehicle_count() == 0; }
};

class CollisionError : public std::runtime_error {
 public:
  CollisionError(const VehicleState& leader, const VehicleState& follower, double time);
  VehicleState leader;
  VehicleState follower;
};

/// Intelligent Driver Model in any consistent unit system:
/// a * (1 - (v/v0)^4 - (s*/s)^2), s* = s0 + v*T + v*dv / (2*sqrt(a*b)),
/// with dv = v - v_leader. Pass an infinite gap for a free road.
template <typename Scalar>
Scalar idm_acceleration(Scalar gap, Scalar speed, Scalar approach_rate, Scalar desired_speed,
                        Scalar time_headway, Scalar min_gap, Scalar max_accel,
                        Scalar comfort_decel) {
  using std::max;
  using std::sqrt;
  const Scalar ratio = speed / desired_speed;
  const Scalar ratio2 = ratio * ratio;
  Scalar result = max_accel * (Scalar(1) - ratio2 * ratio2);
  if (std::isfinite(static_cast<double>(gap))) {
    const Scalar desired_gap =
        min_gap + max(Scalar(0), speed * time_headway +
                                     speed * approach_rate / (Scalar(2) * sqrt(max_accel * comfort_decel)));
    const Scalar interaction = desired_gap / gap;
    result -= max_accel * interaction * interaction;
  }
  return result;
}

inline constexpr double kDefaultDt = 0.5;

/// IDM acceleration (mph/s) toward `driver.desired_speed` with a leader `gap`
/// miles ahead (bumper to bumper). Non-positive gaps return the emergency
/// deceleration. The result never drives the speed below zero within `dt`.
double car_following_accel(double gap, double speed, double leader_speed,
                           const DriverParams& driver, double dt = kDefaultDt,
                           double emergency_decel = 20.0);

/// Desired speed for a vehicle at `position`: the work-zone limit applies from
/// the VMS through the end of the work zone.
double effective_desired_speed(double own_desired, double position, const RoadGeometry& geometry);

/// True when a closing-lane vehicle has stopped at the taper waiting for a gap.
bool waiting_at_taper(const VehicleState& v, const RoadGeometry& geometry,
                      const DriverParams& driver);

/// Lane-drop merging. Closing-lane vehicles past the arrow panel merge as soon
/// as the target gap is acceptable; between the VMS and the arrow panel they
/// merge with probability early_merge_prob per step. A vehicle stopped at the
/// taper accepts min_gap on both sides. Returns the number of merges.
int merge_step(World& world, const RoadGeometry& geometry, const DriverParams& driver, Rng& rng);

struct StepOutcome {
  std::vector<VehicleState> exited;
};

/// One kinematic step: merges, accelerations, ballistic integration, collision
/// check, and removal of vehicles past the network end. Throws CollisionError.
StepOutcome advance(World& world, const SimConfig& config, Rng& rng, double time_after_step);

struct Arrival {
  double time = 0.0;  // s, absolute
  int lane = 0;
};

/// Full-day driver: feeds arrivals into the network and steps it. Entry
/// attempts that would not leave a safe gap wait at the network entry.
class Simulation {
 public:
  Simulation(SimConfig config, std::vector<Arrival> arrivals);

  /// Advance by dt. Returns the vehicles that left the network this step.
  const StepOutcome& step();

  bool finished() const { return step_index_ >= config_.total_steps(); }
  std::int64_t step_index() const { return step_index_; }
  double time() const { return static_cast<double>(step_index_) * config_.dt; }
  bool is_log_step() const { return step_index_ % config_.steps_per_log() == 0; }

  const World& world() const { return world_; }
  const SimConfig& config() const { return config_; }
  const StepOutcome& last_outcome() const { return last_; }
  /// Vehicles placed on the network during the last step.
  std::span<const VehicleState> last_entered() const { return entered_; }

  std::uint64_t vehicles_entered() const { return n_entered_; }
  std::uint64_t vehicles_exited() const { return n_exited_; }
  std::size_t vehicles_present() const { return world_.vehicle_count(); }
  std::size_t vehicles_waiting_to_enter() const;

 private:
  void admit_arrivals();

  SimConfig config_;
  World world_;
  std::vector<Arrival> arrivals_;
  std::size_t next_arrival_ = 0;
  std::vector<std::vector<Arrival>> entry_queues_;
  std::vector<std::size_t> entry_heads_;
  struct PendingDriver {
    bool drawn = false;
    double desired = 0.0;
    bool equipped = true;
  };
  std::vector<PendingDriver> pending_;
  Rng behaviour_rng_;
  Rng vehicle_rng_;
  std::int64_t step_index_ = 0;
  VehicleId next_id_ = 0;
  std::uint64_t n_entered_ = 0;
  std::uint64_t n_exited_ = 0;
  StepOutcome last_;
  std::vector<VehicleState> entered_;
};

/// Independent, reproducible RNG stream for a (seed, stream) pair.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace wztt
