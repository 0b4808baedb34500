#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "firstdrive/civil_time.hpp"
#include "firstdrive/data_model.hpp"

namespace firstdrive {

// Additive shift of the departure (hours) and distance (km) distributions for
// days [start_day, start_day + duration_days).
struct DriftEvent {
  int start_day = 0;
  int duration_days = 0;
  double departure_offset_h = 0.0;
  double distance_offset_km = 0.0;
};

struct DriverProfile {
  std::string vehicle_id;
  bool regular = true;  // ground-truth label for the well-behaving selection
  // Random-usage drivers draw departure and distance uniformly over
  // mean +- sqrt(3) std instead of from the Gaussian / log-normal shapes.
  bool random_usage = false;

  double weekday_departure_mean = 7.5;
  double weekday_departure_std = 0.25;
  double weekend_departure_mean = 10.5;
  double weekend_departure_std = 1.5;
  std::array<double, 7> departure_offset_h{};  // per weekday, Monday first

  double distance_mean = 20.0;  // weekday, log-normal
  double distance_std = 4.0;
  double weekend_distance_mean = 30.0;
  double weekend_distance_std = 20.0;
  std::array<double, 7> distance_scale{1, 1, 1, 1, 1, 1, 1};

  std::array<double, 7> drive_probability{1, 1, 1, 1, 1, 0, 0};
  // A telework weekday behaves like a weekend day (weekend shapes, the mean of
  // the Saturday/Sunday drive probabilities).
  double telework_probability = 0.0;

  double dwell_mean_h = 8.5;  // time parked before the return trip
  double dwell_std_h = 0.5;

  std::vector<DriftEvent> drift_events;
  std::uint64_t noise_seed = 0;
};

struct FleetOptions {
  Date start_date = parse_date("2021-01-04");  // a Monday
  bool return_trips = true;
  bool charges = true;
  // Sessions below the 50 s filter placed before the first drive.
  double short_session_probability = 0.03;
  // First drive recorded as two sessions a few minutes apart.
  double split_drive_probability = 0.03;
};

struct SyntheticFleet {
  std::vector<VehicleHistory> vehicles;  // same order as the profiles
  nlohmann::json ground_truth;
};

// Per-driver streams come from seeds derived from (seed, driver index,
// profile.noise_seed), so drivers are independent of each other's presence.
SyntheticFleet generate_fleet(std::span<const DriverProfile> profiles, int n_days, std::uint64_t seed,
                              const FleetOptions& options = {});

DriverProfile plant_drift(DriverProfile profile, const DriftEvent& event);

// Default desk-scale fleet: heterogeneous regular commuters (per-weekday
// schedules, telework, weekend trips) followed by random-usage drivers.
std::vector<DriverProfile> default_fleet_profiles(std::size_t n_regular = 100, std::size_t n_irregular = 25,
                                                  std::uint64_t seed = 7);

nlohmann::json ground_truth_json(std::span<const DriverProfile> profiles);

}  // namespace firstdrive
