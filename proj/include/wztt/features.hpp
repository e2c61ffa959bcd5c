#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wztt/demand.hpp"
#include "wztt/sim.hpp"
#include "wztt/v2i.hpp"

namespace wztt {

inline constexpr int kSegmentCount = kRsuCount - 1;  // TT_i_1 for i = 2..12
inline constexpr int kExogenousCount = 16;
inline constexpr double kWindowSeconds = 300.0;

enum class QueueMode { oracle, v2i };

std::string_view to_string(QueueMode mode);
QueueMode parse_queue_mode(std::string_view text);

// Missing bitmask: bit (i-2) for tt_seg of RSU i, then the rest.
inline constexpr std::uint32_t kMissingAccel = 1u << 11;
inline constexpr std::uint32_t kMissingQueue = 1u << 12;  // no queue detected
inline constexpr std::uint32_t kMissingTtWz = 1u << 13;
inline constexpr std::uint32_t segment_missing_bit(int rsu_id) { return 1u << (rsu_id - 2); }

struct FeatureWindow {
  int month = 0;
  int replication = 0;
  int t = 0;
  std::array<double, kSegmentCount> tt_seg{};  // s, index i-2 holds TT_i_1
  double upstream_flow = 0.0;                  // veh / window at RSU 12
  double downstream_flow = 0.0;                // veh / window at RSU 1
  double wz_end_acc = 0.0;                     // mph/s
  double q_length = 0.0;                       // mi
  double start_queue = 0.0;                    // mi upstream of WZ start
  double tt_wz = 0.0;                          // s
  std::uint32_t missing = 0;  // as observed, before filling
  int queue_vehicles = 0;

  double tt_segment(int rsu_id) const { return tt_seg[static_cast<std::size_t>(rsu_id - 2)]; }
  /// The 16 exogenous inputs in canonical order (see exogenous_names()).
  std::array<double, kExogenousCount> exogenous() const;
};

/// "TT_2_1", ..., "TT_12_1", "UpstreamFlow", "DownstreamFlow", "WorkZoneEndAcc",
/// "Qlength", "StartQueue".
const std::array<std::string, kExogenousCount>& exogenous_names();
inline constexpr std::string_view kTargetName = "TT_wz";

struct QueueParams {
  double speed_threshold = 10.0;  // mph, strictly below
  double spacing_threshold = 0.01;  // mi, strictly below
  int min_vehicles = 5;
};

struct FeatureParams {
  QueueMode mode = QueueMode::v2i;
  QueueParams queue;
  double wz_end_region = 0.1;  // mi, final stretch of the WZ used for wz_end_acc
  double window_seconds = kWindowSeconds;
};

using SnapshotVehicle = ReconstructedVehicle;

struct QueueInfo {
  double q_length = 0.0;      // head - tail, mi
  double start_queue = 0.0;   // wz_start - tail, mi
  double head_position = 0.0;
  double tail_position = 0.0;
  int vehicle_count = 0;
  std::vector<VehicleId> members;  // tail to head; not kept in dumps
};

/// Maximal runs of consecutive vehicles (sorted ascending by position, at or
/// before the WZ end) with speed and successive spacing under the thresholds;
/// the qualifying run with the most downstream head wins.
std::optional<QueueInfo> detect_queue(std::span<const SnapshotVehicle> snapshot,
                                      const QueueParams& params, const RoadGeometry& geometry);

/// All lanes merged, restricted to positions up to the WZ end, sorted ascending.
std::vector<SnapshotVehicle> snapshot_of(const World& world, const RoadGeometry& geometry);

/// Window [lo, hi) statistics from raw passages, grouped by vehicle.
std::array<std::optional<double>, kSegmentCount> segment_travel_times(
    std::span<const PassageRecord> passages, double lo, double hi);
std::pair<double, double> flows(std::span<const PassageRecord> passages, double lo, double hi);
std::optional<double> wz_end_acceleration(std::span<const ReceivedTrajectory> received, double lo,
                                          double hi, const RoadGeometry& geometry,
                                          double region = 0.1);

/// Free-flow stand-ins for leading missing values.
double free_flow_segment_time(const RoadGeometry& geometry, std::span<const Rsu> rsus, int rsu_id);
double free_flow_wz_time(const RoadGeometry& geometry);

/// Incremental aggregation of one replication-day. Records are fed in time
/// order; finish_window(k) must be called once everything stamped up to the
/// window end has been added. Per-vehicle state is dropped once the vehicle's
/// RSU 1 passage has been aggregated.
class FeatureAggregator {
 public:
  FeatureAggregator(int month, int replication, int window_count, const RoadGeometry& geometry,
                    std::vector<Rsu> rsus, FeatureParams params);

  void add_passages(std::span<const PassageRecord> passages);
  void add_received(std::span<const ReceivedTrajectory> received);
  /// Ground-truth queue at the start of window k.
  void set_oracle_queue(int k, std::optional<QueueInfo> queue);
  void finish_window(int k);

  int window_count() const { return window_count_; }
  /// Completed windows with forward/free-flow filling applied. Call after the
  /// last window.
  std::vector<FeatureWindow> result() const;
  std::size_t tracked_vehicles() const;

 private:
  struct Track {
    std::array<double, kRsuCount> passage{};  // NaN until seen, index id-1
    std::vector<TrajectoryPoint> points;
    bool live = false;
    bool retired = false;
  };
  Track& track(VehicleId id);
  std::optional<double> tt_wz_for(int k, const std::optional<QueueInfo>& queue) const;
  std::optional<QueueInfo> reconstructed_queue(double time) const;

  int month_;
  int replication_;
  int window_count_;
  RoadGeometry geometry_;
  std::vector<Rsu> rsus_;
  FeatureParams params_;
  std::vector<Track> tracks_;
  std::vector<std::vector<VehicleId>> rsu1_exits_;             // per window
  std::vector<std::array<std::vector<double>, kSegmentCount>> seg_;
  std::vector<std::vector<double>> acc_;
  std::vector<int> up_count_;
  std::vector<int> down_count_;
  std::vector<std::optional<QueueInfo>> oracle_queue_;
  std::vector<bool> oracle_set_;
  std::vector<FeatureWindow> windows_;
  std::vector<VehicleId> prune_next_;
};

/// Replication seed derived from the base seed and (month, replication).
std::uint64_t replication_seed(std::uint64_t base_seed, int month, int replication);

struct ReplicationStats {
  int month = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t entered = 0;
  std::uint64_t exited = 0;
  std::uint64_t present_at_end = 0;
  std::uint64_t waiting_at_end = 0;
  std::uint64_t points_logged = 0;
  std::uint64_t points_received = 0;
  std::uint64_t points_lost_on_exit = 0;
  std::uint64_t points_buffered_at_end = 0;
  double max_queue_length = 0.0;  // mi, oracle, over window starts
};

struct ReplicationSpec {
  int month = 1;
  int replication = 0;
  SimConfig sim;  // seed already derived
  DemandProfile profile;
  std::vector<Rsu> rsus;
  FeatureParams features;
};

/// Raw stage artifacts for one replication: passages, received trajectories
/// and the oracle queue at each window start.
class RawSink {
 public:
  explicit RawSink(const std::filesystem::path& stem);
  void write(const V2iNetwork::Drained& batch) { v2i_.write(batch); }
  void write_queue(int k, const std::optional<QueueInfo>& queue);

  static std::filesystem::path passages_path(const std::filesystem::path& stem);
  static std::filesystem::path trajectories_path(const std::filesystem::path& stem);
  static std::filesystem::path queue_path(const std::filesystem::path& stem);

 private:
  V2iCsvSink v2i_;
  csv::Writer queue_;
};

struct ReplicationResult {
  std::vector<FeatureWindow> windows;
  ReplicationStats stats;
};

/// Simulate one day, sense it, and aggregate features in a single pass.
ReplicationResult run_replication(const ReplicationSpec& spec, RawSink* sink = nullptr);

/// Same aggregation from raw dumps written by RawSink.
std::vector<FeatureWindow> features_from_dumps(const std::filesystem::path& stem, int month,
                                               int replication, int window_count,
                                               const RoadGeometry& geometry,
                                               std::vector<Rsu> rsus, const FeatureParams& params);

/// Windows per simulated day for a config (duration / window length).
int windows_per_day(const SimConfig& sim, double window_seconds = kWindowSeconds);

void write_features_csv(const std::filesystem::path& path, std::span<const FeatureWindow> rows);
std::vector<FeatureWindow> read_features_csv(const std::filesystem::path& path);

}  // namespace wztt
