#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "wztt/csv.hpp"
#include "wztt/sim.hpp"

namespace wztt {

inline constexpr int kRsuCount = 12;

struct TrajectoryPoint {
  double time = 0.0;          // s
  double position = 0.0;      // mi
  double speed = 0.0;         // mph
  double acceleration = 0.0;  // mph/s
};

struct PassageRecord {
  int rsu_id = 0;
  VehicleId vehicle_id = 0;
  double timestamp = 0.0;  // s, instant the vehicle crossed the RSU position
};

struct ObuBuffer {
  VehicleId vehicle_id = 0;
  std::vector<TrajectoryPoint> points;  // since the last transmission
};

/// One OBU upload: everything buffered since the previous roadside unit.
struct ReceivedTrajectory {
  int rsu_id = 0;
  VehicleId vehicle_id = 0;
  double received_at = 0.0;  // s, simulation time of the upload
  std::vector<TrajectoryPoint> points;
};

struct Rsu {
  int rsu_id = 0;
  double position = 0.0;         // mi, network coordinates
  double coverage_radius = 0.05; // mi
  std::vector<PassageRecord> passages;
  std::vector<ReceivedTrajectory> received;

  double coverage_start() const { return position - coverage_radius; }
};

/// RSU 1 at the work-zone end, RSU k (k = 2..12) 0.2*(k-2) mi upstream of the
/// work-zone start. Returned in rsu_id order (index = id - 1).
std::vector<Rsu> standard_rsu_layout(const RoadGeometry& geometry, double coverage_radius = 0.05);

/// Layout from explicit positions, `positions[k-1]` for RSU k. Throws unless
/// the positions are strictly decreasing with id and on the network.
std::vector<Rsu> rsu_layout(std::span<const double> positions, double coverage_radius,
                            const RoadGeometry& geometry);

/// Distance in miles from RSU `id` to RSU 1.
double distance_to_rsu1(std::span<const Rsu> rsus, int id);

/// Per-vehicle OBU state: buffer plus traversal progress (which coverage
/// zones and RSU positions the vehicle has already passed).
struct ObuState {
  ObuBuffer buffer;
  std::uint8_t coverage_entered = 0;  // count of RSUs, in upstream-to-downstream order
  std::uint8_t passages_made = 0;
  bool active = false;
};

/// Bookkeeping shared by detection and logging.
class ObuTable {
 public:
  ObuState& at(VehicleId id);
  const ObuState* find(VehicleId id) const;
  void retire(VehicleId id);

  std::uint64_t points_logged = 0;
  std::uint64_t points_lost_on_exit = 0;
  std::size_t points_buffered() const;

 private:
  std::vector<ObuState> slots_;
};

/// Append one trajectory point per equipped vehicle to its OBU buffer.
void log_trajectories(const World& world, ObuTable& obus, double time);

/// Coverage and passage detection for vehicles that moved from
/// previous_position to position during (t_prev, t_now]. Entering a coverage
/// interval uploads the OBU buffer to that RSU and clears it; crossing the RSU
/// position records a passage at the linearly interpolated crossing instant.
/// Each happens at most once per RSU per traversal.
void detect_and_transmit(std::span<const VehicleState> vehicles, std::vector<Rsu>& rsus,
                         ObuTable& obus, double t_prev, double t_now);

/// Linear interpolation of a time-ordered trajectory at `time`; empty when the
/// trajectory does not span it.
std::optional<TrajectoryPoint> interpolate_at(std::span<const TrajectoryPoint> trajectory,
                                              double time);

/// First instant the trajectory reaches `position`, interpolated; empty when
/// the trajectory starts past it or never gets there.
std::optional<double> crossing_time(std::span<const TrajectoryPoint> trajectory, double position);

struct ReconstructedVehicle {
  VehicleId vehicle_id = 0;
  double position = 0.0;
  double speed = 0.0;
};

/// Positions and speeds at `query_time` for every vehicle whose received
/// trajectory spans it, sorted by position.
std::vector<ReconstructedVehicle> reconstruct_positions(std::span<const ReceivedTrajectory> received,
                                                        double query_time);

/// Owns the roadside units and OBUs for one replication.
class V2iNetwork {
 public:
  explicit V2iNetwork(std::vector<Rsu> rsus);

  /// Log (when `log_tick`), detect, and retire exited vehicles for one step.
  void observe_step(const Simulation& sim, bool log_tick);

  std::vector<Rsu>& rsus() { return rsus_; }
  const std::vector<Rsu>& rsus() const { return rsus_; }
  const ObuTable& obus() const { return obus_; }

  std::size_t points_at_rsus() const;

  /// Move every passage and upload recorded since the last call out of the RSUs.
  struct Drained {
    std::vector<PassageRecord> passages;
    std::vector<ReceivedTrajectory> received;
  };
  Drained drain();

  std::uint64_t points_drained() const { return points_drained_; }

 private:
  std::vector<Rsu> rsus_;
  ObuTable obus_;
  std::uint64_t points_drained_ = 0;
};

// CSV dumps (schemas fixed).
void write_passages_csv(const std::filesystem::path& path, std::span<const PassageRecord> passages);
void write_trajectories_csv(const std::filesystem::path& path,
                            std::span<const ReceivedTrajectory> received);

/// Incremental writer for the two dump files, fed from V2iNetwork::drain().
class V2iCsvSink {
 public:
  V2iCsvSink(const std::filesystem::path& passages, const std::filesystem::path& trajectories);
  void write(const V2iNetwork::Drained& batch);

 private:
  csv::Writer passages_;
  csv::Writer trajectories_;
};

std::vector<PassageRecord> read_passages_csv(const std::filesystem::path& path);
std::vector<ReceivedTrajectory> read_trajectories_csv(const std::filesystem::path& path);

}  // namespace wztt
