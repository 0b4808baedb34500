#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firstdrive/civil_time.hpp"

namespace firstdrive {

enum class Signal : std::size_t { Speed = 0, Acceleration, Temperature, SunLoad, StateOfCharge };
inline constexpr std::size_t kSignalCount = 5;

// Aggregate of one signal over a session. Any field may be missing.
struct SignalStats {
  std::optional<double> mean;
  std::optional<double> std;
  std::optional<double> min;
  std::optional<double> max;

  bool operator==(const SignalStats&) const = default;
};

struct TripSession {
  std::string vehicle_id;
  Timestamp start;
  Timestamp end;
  double distance_km = 0.0;
  std::array<SignalStats, kSignalCount> signals{};

  SignalStats& signal(Signal s) { return signals[static_cast<std::size_t>(s)]; }
  const SignalStats& signal(Signal s) const { return signals[static_cast<std::size_t>(s)]; }
  double duration_seconds() const { return seconds_between(start, end); }

  bool operator==(const TripSession&) const = default;
};

struct ChargeSession {
  std::string vehicle_id;
  Timestamp start;
  Timestamp end;
  std::optional<double> soc_initial;

  double duration_seconds() const { return seconds_between(start, end); }

  bool operator==(const ChargeSession&) const = default;
};

// All sessions of one vehicle; each list is ordered by start time.
struct VehicleHistory {
  std::string vehicle_id;
  std::vector<TripSession> trips;
  std::vector<ChargeSession> charges;

  std::size_t drive_count() const { return trips.size(); }

  bool operator==(const VehicleHistory&) const = default;
};

// Everything known at the midnight that opens `date`.
struct RawFeatures {
  Date date;
  std::optional<TripSession> previous_trip;   // last trip that ended before midnight
  std::optional<ChargeSession> last_charge;   // last charge that started before midnight
};

struct DailyExample {
  std::string vehicle_id;
  Date date;
  RawFeatures features;
  double target_departure = 0.0;  // hours after midnight, [0, 24)
  double target_distance = 0.0;   // km

  double target(bool departure) const { return departure ? target_departure : target_distance; }
};

struct PreprocessOptions {
  std::chrono::seconds min_duration{50};
  std::chrono::minutes max_gap{15};
  std::size_t min_drives = 50;
};

std::vector<TripSession> filter_short_sessions(std::vector<TripSession> sessions,
                                               std::chrono::seconds min_duration = std::chrono::seconds{50});
std::vector<ChargeSession> filter_short_sessions(std::vector<ChargeSession> sessions,
                                                 std::chrono::seconds min_duration = std::chrono::seconds{50});

// Consecutive sessions closer than `max_gap` (strictly) are fused, left to
// right and transitively. Throws DataError on overlapping sessions.
std::vector<TripSession> merge_adjacent_sessions(std::vector<TripSession> sessions,
                                                 std::chrono::minutes max_gap = std::chrono::minutes{15});
std::vector<ChargeSession> merge_adjacent_sessions(std::vector<ChargeSession> sessions,
                                                   std::chrono::minutes max_gap = std::chrono::minutes{15});

// Duration-weighted pooling of two signal aggregates.
SignalStats merge_signal_stats(const SignalStats& a, double weight_a, const SignalStats& b, double weight_b);

std::vector<VehicleHistory> filter_sparse_vehicles(std::vector<VehicleHistory> fleet, std::size_t min_drives = 50);

// Short-session filter, then merge, for both session kinds of one vehicle.
VehicleHistory preprocess_sessions(VehicleHistory history, const PreprocessOptions& options = {});

// Session filters on every vehicle followed by the sparse-vehicle filter.
std::vector<VehicleHistory> preprocess_fleet(std::vector<VehicleHistory> fleet, const PreprocessOptions& options = {});

// One example per calendar day that contains at least one drive, in date order.
std::vector<DailyExample> build_daily_examples(const VehicleHistory& history);

// Session CSV:
// vehicle_id,kind,start_iso8601,end_iso8601,distance_km,soc_initial_pct,speed_mean,speed_std,
// accel_mean,accel_std,temp_mean,sunload_mean,soc_mean
// Vehicles come back ordered by id, sessions by start. Throws DataError.
std::vector<VehicleHistory> read_sessions_csv(std::istream& in);
void write_sessions_csv(std::ostream& out, std::span<const VehicleHistory> fleet);

void write_daily_examples_csv(std::ostream& out, std::span<const DailyExample> examples);
std::vector<DailyExample> read_daily_examples_csv(std::istream& in);

}  // namespace firstdrive
