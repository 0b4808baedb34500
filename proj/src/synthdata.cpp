#include "firstdrive/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "firstdrive/rng.hpp"

namespace firstdrive {
namespace {

using std::chrono::seconds;

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kConsumptionPctPerKm = 0.18;

struct DayShape {
  double departure_mean;
  double departure_std;
  double distance_mean;
  double distance_std;
  double drive_probability;
  bool weekend_like;
};

double draw_departure(Rng& rng, const DriverProfile& p, double mean, double std) {
  if (p.random_usage) return std::clamp(rng.uniform(mean - kSqrt3 * std, mean + kSqrt3 * std), 0.0, 23.5);
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double d = rng.normal(mean, std);
    if (d >= 0.0 && d < 23.5) return d;
  }
  return std::clamp(mean, 0.0, 23.4);
}

double draw_distance(Rng& rng, const DriverProfile& p, double mean, double std) {
  if (p.random_usage) return std::max(0.5, rng.uniform(mean - kSqrt3 * std, mean + kSqrt3 * std));
  if (std <= 0.0) return std::max(0.5, mean);
  // Log-normal with the requested mean and standard deviation.
  const double s2 = std::log(1.0 + (std * std) / (mean * mean));
  const double mu = std::log(mean) - s2 / 2.0;
  return std::max(0.5, std::exp(rng.normal(mu, std::sqrt(s2))));
}

double temperature(Date d, Rng& rng) {
  const auto ymd = std::chrono::year_month_day(d);
  const Date jan1 = std::chrono::sys_days(ymd.year() / std::chrono::January / 1);
  const double doy = static_cast<double>((d - jan1).count());
  return 10.0 - 10.0 * std::cos(2.0 * std::numbers::pi * (doy - 15.0) / 365.0) + rng.normal(0.0, 2.0);
}

Timestamp at_hours(Date d, double hours) {
  return midnight_of(d) + seconds(static_cast<std::int64_t>(std::llround(hours * 3600.0)));
}

TripSession make_trip(const std::string& id, Timestamp start, double distance, double soc, Date date, Rng& rng) {
  const double speed = std::min(100.0, 25.0 + 0.5 * distance);
  const double duration_s = std::max(60.0, distance / speed * 3600.0);
  TripSession t;
  t.vehicle_id = id;
  t.start = start;
  t.end = start + seconds(static_cast<std::int64_t>(std::llround(duration_s)));
  t.distance_km = distance;
  const double mean_speed = distance / (duration_s / 3600.0);
  t.signal(Signal::Speed).mean = mean_speed;
  t.signal(Signal::Speed).std = 0.3 * mean_speed;
  t.signal(Signal::Acceleration).mean = rng.normal(0.0, 0.02);
  t.signal(Signal::Acceleration).std = std::fabs(rng.normal(0.5, 0.05));
  const double temp = temperature(date, rng);
  t.signal(Signal::Temperature).mean = temp;
  const double hour = hours_since_midnight(start);
  const double daylight = (hour >= 7.0 && hour <= 19.0) ? 1.0 : 0.1;
  t.signal(Signal::SunLoad).mean = std::max(0.0, daylight * (300.0 + 15.0 * temp + rng.normal(0.0, 40.0)));
  t.signal(Signal::StateOfCharge).mean = std::clamp(soc - distance * kConsumptionPctPerKm / 2.0, 0.0, 100.0);
  return t;
}

DayShape shape_for(const DriverProfile& p, int dow, bool telework) {
  const bool weekend_like = dow >= 5 || telework;
  DayShape s{};
  s.weekend_like = weekend_like;
  s.departure_mean = (weekend_like ? p.weekend_departure_mean : p.weekday_departure_mean) +
                     (telework ? 0.0 : p.departure_offset_h[static_cast<std::size_t>(dow)]);
  s.departure_std = weekend_like ? p.weekend_departure_std : p.weekday_departure_std;
  const double scale = telework ? 1.0 : p.distance_scale[static_cast<std::size_t>(dow)];
  s.distance_mean = (weekend_like ? p.weekend_distance_mean : p.distance_mean) * scale;
  s.distance_std = (weekend_like ? p.weekend_distance_std : p.distance_std) * scale;
  s.drive_probability =
      telework ? (p.drive_probability[5] + p.drive_probability[6]) / 2.0 : p.drive_probability[static_cast<std::size_t>(dow)];
  return s;
}

void validate(const DriverProfile& p) {
  auto prob = [&](double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("DriverProfile " + p.vehicle_id + ": probability outside [0, 1]");
  };
  for (double v : p.drive_probability) prob(v);
  prob(p.telework_probability);
  for (double s : {p.weekday_departure_std, p.weekend_departure_std, p.distance_std, p.weekend_distance_std, p.dwell_std_h})
    if (!(s >= 0.0)) throw std::invalid_argument("DriverProfile " + p.vehicle_id + ": negative standard deviation");
  if (!(p.distance_mean > 0.0 && p.weekend_distance_mean > 0.0))
    throw std::invalid_argument("DriverProfile " + p.vehicle_id + ": distance means must be positive");
}

VehicleHistory generate_driver(const DriverProfile& p, int n_days, std::uint64_t seed, const FleetOptions& o) {
  validate(p);
  Rng rng(seed);
  VehicleHistory h;
  h.vehicle_id = p.vehicle_id;
  double soc = 80.0;
  std::optional<Timestamp> last_end;
  for (int day = 0; day < n_days; ++day) {
    const Date date = o.start_date + std::chrono::days(day);
    const int dow = static_cast<int>(std::chrono::weekday(date).iso_encoding()) - 1;
    const bool telework = dow < 5 && rng.bernoulli(p.telework_probability);
    DayShape s = shape_for(p, dow, telework);
    for (const auto& e : p.drift_events) {
      if (day >= e.start_day && day < e.start_day + e.duration_days) {
        s.departure_mean += e.departure_offset_h;
        s.distance_mean += e.distance_offset_km;
      }
    }
    s.distance_mean = std::max(0.5, s.distance_mean);
    if (!rng.bernoulli(s.drive_probability)) continue;

    const double departure = draw_departure(rng, p, s.departure_mean, s.departure_std);
    const double distance = draw_distance(rng, p, s.distance_mean, s.distance_std);
    const Timestamp start = at_hours(date, departure);
    if (last_end && *last_end + std::chrono::minutes(20) > start) continue;

    if (rng.bernoulli(o.short_session_probability) && departure >= 1.0) {
      const Timestamp ss = start - seconds(static_cast<std::int64_t>(rng.uniform(20.0, 50.0) * 60.0));
      if (!last_end || ss > *last_end) {
        TripSession blip = make_trip(p.vehicle_id, ss, 0.1, soc, date, rng);
        blip.end = ss + seconds(static_cast<std::int64_t>(rng.uniform(15.0, 45.0)));
        h.trips.push_back(blip);
      }
    }

    TripSession outbound = make_trip(p.vehicle_id, start, distance, soc, date, rng);
    if (distance > 2.0 && rng.bernoulli(o.split_drive_probability)) {
      const double frac = rng.uniform(0.3, 0.7);
      const auto total = outbound.end - outbound.start;
      TripSession first = outbound;
      first.distance_km = distance * frac;
      first.end = first.start + std::chrono::duration_cast<seconds>(total * frac) + seconds(1);
      TripSession second = outbound;
      second.distance_km = distance - first.distance_km;
      second.start = first.end + seconds(static_cast<std::int64_t>(rng.uniform(2.0, 10.0) * 60.0));
      second.end = second.start + std::chrono::duration_cast<seconds>(total * (1.0 - frac)) + seconds(1);
      h.trips.push_back(first);
      h.trips.push_back(second);
      last_end = second.end;
    } else {
      h.trips.push_back(outbound);
      last_end = outbound.end;
    }
    soc = std::max(0.0, soc - distance * kConsumptionPctPerKm);

    if (o.return_trips) {
      const double dwell_mean = s.weekend_like ? p.dwell_mean_h / 3.0 : p.dwell_mean_h;
      const double dwell = std::max(0.5, p.random_usage ? rng.uniform(0.5, 2.0 * dwell_mean)
                                                        : rng.normal(dwell_mean, p.dwell_std_h));
      const Timestamp rs = *last_end + seconds(static_cast<std::int64_t>(std::llround(dwell * 3600.0)));
      TripSession back = make_trip(p.vehicle_id, rs, distance, soc, date, rng);
      if (back.end + std::chrono::minutes(5) < midnight_of(date + std::chrono::days(1))) {
        h.trips.push_back(back);
        last_end = back.end;
        soc = std::max(0.0, soc - distance * kConsumptionPctPerKm);
      }
    }

    if (o.charges && (soc < 60.0 || rng.bernoulli(0.25))) {
      ChargeSession c;
      c.vehicle_id = p.vehicle_id;
      c.start = *last_end + seconds(static_cast<std::int64_t>(rng.uniform(5.0, 30.0) * 60.0));
      const double hours = (90.0 - soc) / 15.0 + 0.5;
      c.end = c.start + seconds(static_cast<std::int64_t>(std::llround(hours * 3600.0)));
      c.soc_initial = std::round(soc * 10.0) / 10.0;
      if (h.charges.empty() || h.charges.back().end < c.start) {
        h.charges.push_back(c);
        soc = std::max(soc, 90.0);
      }
    }
  }
  return h;
}

}  // namespace

SyntheticFleet generate_fleet(std::span<const DriverProfile> profiles, int n_days, std::uint64_t seed,
                              const FleetOptions& options) {
  if (n_days < 1) throw std::invalid_argument("generate_fleet: n_days must be at least 1");
  SyntheticFleet fleet;
  fleet.vehicles.reserve(profiles.size());
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto driver_seed = derive_seed(derive_seed(seed, i), profiles[i].noise_seed);
    fleet.vehicles.push_back(generate_driver(profiles[i], n_days, driver_seed, options));
  }
  fleet.ground_truth = ground_truth_json(profiles);
  fleet.ground_truth["seed"] = seed;
  fleet.ground_truth["n_days"] = n_days;
  fleet.ground_truth["start_date"] = format_date(options.start_date);
  return fleet;
}

DriverProfile plant_drift(DriverProfile profile, const DriftEvent& event) {
  if (event.start_day < 0 || event.duration_days < 0) throw std::invalid_argument("plant_drift: negative event window");
  profile.drift_events.push_back(event);
  return profile;
}

std::vector<DriverProfile> default_fleet_profiles(std::size_t n_regular, std::size_t n_irregular, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  std::vector<DriverProfile> out;
  char id[32];
  for (std::size_t i = 0; i < n_regular + n_irregular; ++i) {
    std::snprintf(id, sizeof id, "V%03zu", i + 1);
    DriverProfile p;
    p.vehicle_id = id;
    p.noise_seed = i;
    if (i < n_regular) {
      p.weekday_departure_mean = rng.uniform(6.5, 8.5);
      p.weekday_departure_std = rng.uniform(0.15, 0.45);
      p.weekend_departure_mean = rng.uniform(9.0, 12.0);
      p.weekend_departure_std = rng.uniform(0.75, 2.0);
      p.distance_mean = rng.uniform(8.0, 40.0);
      p.distance_std = p.distance_mean * rng.uniform(0.03, 0.12);
      p.weekend_distance_mean = rng.uniform(10.0, 60.0);
      p.weekend_distance_std = p.weekend_distance_mean * rng.uniform(0.3, 0.8);
      // Most commuters keep a weekly schedule: different start times and
      // destinations on different weekdays.
      const bool varied = rng.bernoulli(0.85);
      for (std::size_t d = 0; d < 5; ++d) {
        p.departure_offset_h[d] = varied ? rng.uniform(-2.0, 3.0) : rng.uniform(-0.25, 0.25);
        p.distance_scale[d] = varied ? rng.uniform(0.3, 3.0) : 1.0;
        p.drive_probability[d] = rng.uniform(0.85, 1.0);
      }
      p.drive_probability[5] = rng.uniform(0.3, 0.8);
      p.drive_probability[6] = rng.uniform(0.2, 0.6);
      p.telework_probability = rng.uniform(0.0, 0.15);
      p.dwell_mean_h = rng.uniform(7.5, 9.5);
      p.dwell_std_h = 0.5;
    } else {
      p.regular = false;
      p.random_usage = true;
      p.weekday_departure_mean = p.weekend_departure_mean = rng.uniform(12.0, 15.0);
      p.weekday_departure_std = p.weekend_departure_std = rng.uniform(3.5, 4.5);
      p.distance_mean = p.weekend_distance_mean = rng.uniform(20.0, 40.0);
      p.distance_std = p.weekend_distance_std = p.distance_mean * rng.uniform(0.5, 0.55);
      const double prob = rng.uniform(0.4, 0.7);
      p.drive_probability.fill(prob);
      p.dwell_mean_h = 3.0;
      p.dwell_std_h = 2.0;
    }
    out.push_back(std::move(p));
  }
  return out;
}

nlohmann::json ground_truth_json(std::span<const DriverProfile> profiles) {
  nlohmann::json drivers = nlohmann::json::array();
  for (const auto& p : profiles) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : p.drift_events) {
      events.push_back({{"start_day", e.start_day},
                        {"duration_days", e.duration_days},
                        {"departure_offset_h", e.departure_offset_h},
                        {"distance_offset_km", e.distance_offset_km}});
    }
    drivers.push_back({{"vehicle_id", p.vehicle_id},
                       {"regular", p.regular},
                       {"random_usage", p.random_usage},
                       {"weekday_departure_mean", p.weekday_departure_mean},
                       {"weekday_departure_std", p.weekday_departure_std},
                       {"weekend_departure_mean", p.weekend_departure_mean},
                       {"weekend_departure_std", p.weekend_departure_std},
                       {"departure_offset_h", p.departure_offset_h},
                       {"distance_mean", p.distance_mean},
                       {"distance_std", p.distance_std},
                       {"weekend_distance_mean", p.weekend_distance_mean},
                       {"weekend_distance_std", p.weekend_distance_std},
                       {"distance_scale", p.distance_scale},
                       {"drive_probability", p.drive_probability},
                       {"telework_probability", p.telework_probability},
                       {"dwell_mean_h", p.dwell_mean_h},
                       {"dwell_std_h", p.dwell_std_h},
                       {"drift_events", events},
                       {"noise_seed", p.noise_seed}});
  }
  return {{"version", 1}, {"drivers", drivers}};
}

}  // namespace firstdrive
