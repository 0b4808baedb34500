#include "firstdrive/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "firstdrive/errors.hpp"
#include "firstdrive/text_io.hpp"

namespace firstdrive {
namespace {

template <typename Session>
std::vector<Session> drop_short(std::vector<Session> sessions, std::chrono::seconds min_duration) {
  std::erase_if(sessions, [&](const Session& s) { return s.end - s.start < min_duration; });
  return sessions;
}

std::optional<double> pooled_mean(const std::optional<double>& a, double wa, const std::optional<double>& b,
                                  double wb) {
  if (a && b) return (wa * *a + wb * *b) / (wa + wb);
  return a ? a : b;
}

template <typename Session, typename Fuse>
std::vector<Session> merge_runs(std::vector<Session> sessions, std::chrono::minutes max_gap, Fuse fuse) {
  std::vector<Session> merged;
  merged.reserve(sessions.size());
  for (auto& s : sessions) {
    if (!merged.empty()) {
      Session& current = merged.back();
      if (s.start < current.end) {
        throw DataError("overlapping sessions for vehicle '" + s.vehicle_id + "' at " + format_timestamp(s.start));
      }
      if (s.start - current.end < max_gap) {
        fuse(current, s);
        continue;
      }
    }
    merged.push_back(std::move(s));
  }
  return merged;
}

}  // namespace

std::vector<TripSession> filter_short_sessions(std::vector<TripSession> sessions, std::chrono::seconds min_duration) {
  return drop_short(std::move(sessions), min_duration);
}

std::vector<ChargeSession> filter_short_sessions(std::vector<ChargeSession> sessions,
                                                 std::chrono::seconds min_duration) {
  return drop_short(std::move(sessions), min_duration);
}

SignalStats merge_signal_stats(const SignalStats& a, double wa, const SignalStats& b, double wb) {
  SignalStats out;
  out.mean = pooled_mean(a.mean, wa, b.mean, wb);
  if (a.mean && a.std && b.mean && b.std) {
    // Pool second moments: E[x^2] = var + mean^2 per part.
    const double m = *out.mean;
    const double second = (wa * (*a.std * *a.std + *a.mean * *a.mean) + wb * (*b.std * *b.std + *b.mean * *b.mean)) /
                          (wa + wb);
    out.std = std::sqrt(std::max(0.0, second - m * m));
  } else if (a.mean && a.std) {
    out.std = a.std;
  } else if (b.mean && b.std) {
    out.std = b.std;
  }
  if (a.min && b.min) {
    out.min = std::min(*a.min, *b.min);
  } else {
    out.min = a.min ? a.min : b.min;
  }
  if (a.max && b.max) {
    out.max = std::max(*a.max, *b.max);
  } else {
    out.max = a.max ? a.max : b.max;
  }
  return out;
}

std::vector<TripSession> merge_adjacent_sessions(std::vector<TripSession> sessions, std::chrono::minutes max_gap) {
  return merge_runs(std::move(sessions), max_gap, [](TripSession& into, const TripSession& next) {
    const double wa = into.duration_seconds();
    const double wb = next.duration_seconds();
    for (std::size_t i = 0; i < kSignalCount; ++i) {
      into.signals[i] = merge_signal_stats(into.signals[i], wa, next.signals[i], wb);
    }
    into.end = next.end;
    into.distance_km += next.distance_km;
  });
}

std::vector<ChargeSession> merge_adjacent_sessions(std::vector<ChargeSession> sessions,
                                                   std::chrono::minutes max_gap) {
  return merge_runs(std::move(sessions), max_gap, [](ChargeSession& into, const ChargeSession& next) {
    into.end = next.end;
    if (!into.soc_initial) into.soc_initial = next.soc_initial;
  });
}

std::vector<VehicleHistory> filter_sparse_vehicles(std::vector<VehicleHistory> fleet, std::size_t min_drives) {
  std::erase_if(fleet, [&](const VehicleHistory& v) { return v.drive_count() < min_drives; });
  return fleet;
}

VehicleHistory preprocess_sessions(VehicleHistory history, const PreprocessOptions& options) {
  history.trips = merge_adjacent_sessions(filter_short_sessions(std::move(history.trips), options.min_duration),
                                          options.max_gap);
  history.charges = merge_adjacent_sessions(filter_short_sessions(std::move(history.charges), options.min_duration),
                                            options.max_gap);
  return history;
}

std::vector<VehicleHistory> preprocess_fleet(std::vector<VehicleHistory> fleet, const PreprocessOptions& options) {
  for (auto& v : fleet) v = preprocess_sessions(std::move(v), options);
  return filter_sparse_vehicles(std::move(fleet), options.min_drives);
}

std::vector<DailyExample> build_daily_examples(const VehicleHistory& history) {
  std::vector<DailyExample> examples;
  const auto& trips = history.trips;
  const auto& charges = history.charges;
  std::size_t next_charge = 0;  // first charge not yet started before the current midnight
  std::size_t i = 0;
  while (i < trips.size()) {
    const TripSession& first = trips[i];
    const Date day = date_of(first.start);
    const Timestamp midnight = midnight_of(day);
    if (i > 0 && trips[i - 1].end > first.start) {
      throw DataError("clock inconsistency for vehicle '" + history.vehicle_id + "': drive at " +
                      format_timestamp(first.start) + " starts before the previous drive ends");
    }

    DailyExample ex;
    ex.vehicle_id = history.vehicle_id;
    ex.date = day;
    ex.features.date = day;
    // Trips are ordered and disjoint, so ends are ordered too.
    for (std::size_t j = i; j-- > 0;) {
      if (trips[j].end < midnight) {
        ex.features.previous_trip = trips[j];
        break;
      }
    }
    while (next_charge < charges.size() && charges[next_charge].start < midnight) ++next_charge;
    if (next_charge > 0) ex.features.last_charge = charges[next_charge - 1];
    ex.target_departure = hours_since_midnight(first.start);
    ex.target_distance = first.distance_km;
    examples.push_back(std::move(ex));

    ++i;
    while (i < trips.size() && date_of(trips[i].start) == day) {
      if (trips[i - 1].end > trips[i].start) {
        throw DataError("clock inconsistency for vehicle '" + history.vehicle_id + "' at " +
                        format_timestamp(trips[i].start));
      }
      ++i;
    }
  }
  return examples;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

constexpr const char* kSessionHeader =
    "vehicle_id,kind,start_iso8601,end_iso8601,distance_km,soc_initial_pct,speed_mean,speed_std,"
    "accel_mean,accel_std,temp_mean,sunload_mean,soc_mean";
constexpr std::size_t kSessionColumns = 13;

std::optional<double> optional_field(std::string_view field, std::size_t line_no, const char* name) {
  if (field.empty()) return std::nullopt;
  auto v = text::parse_double(field);
  if (!v || !std::isfinite(*v)) {
    throw DataError("line " + std::to_string(line_no) + ": bad value for " + name + " '" + std::string(field) + "'");
  }
  return v;
}

void require(bool ok, std::size_t line_no, const std::string& what) {
  if (!ok) throw DataError("line " + std::to_string(line_no) + ": " + what);
}

void write_signal_means(std::ostream& out, const TripSession& t) {
  using text::format_optional;
  out << format_optional(t.signal(Signal::Speed).mean) << ',' << format_optional(t.signal(Signal::Speed).std) << ','
      << format_optional(t.signal(Signal::Acceleration).mean) << ','
      << format_optional(t.signal(Signal::Acceleration).std) << ','
      << format_optional(t.signal(Signal::Temperature).mean) << ','
      << format_optional(t.signal(Signal::SunLoad).mean) << ','
      << format_optional(t.signal(Signal::StateOfCharge).mean);
}

void read_signal_means(TripSession& t, std::span<const std::string_view> f, std::size_t line_no) {
  t.signal(Signal::Speed).mean = optional_field(f[0], line_no, "speed_mean");
  t.signal(Signal::Speed).std = optional_field(f[1], line_no, "speed_std");
  t.signal(Signal::Acceleration).mean = optional_field(f[2], line_no, "accel_mean");
  t.signal(Signal::Acceleration).std = optional_field(f[3], line_no, "accel_std");
  t.signal(Signal::Temperature).mean = optional_field(f[4], line_no, "temp_mean");
  t.signal(Signal::SunLoad).mean = optional_field(f[5], line_no, "sunload_mean");
  t.signal(Signal::StateOfCharge).mean = optional_field(f[6], line_no, "soc_mean");
  for (const auto& s : t.signals) {
    require(!s.std || *s.std >= 0.0, line_no, "negative standard deviation");
  }
  const auto& soc = t.signal(Signal::StateOfCharge).mean;
  require(!soc || (*soc >= 0.0 && *soc <= 100.0), line_no, "state of charge outside [0, 100]");
}

}  // namespace

std::vector<VehicleHistory> read_sessions_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim_cr(line) != kSessionHeader) {
    throw DataError("session CSV: unexpected header");
  }
  std::map<std::string, VehicleHistory> by_vehicle;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::trim_cr(line);
    if (row.empty()) continue;
    const auto f = text::split_csv(row);
    require(f.size() == kSessionColumns, line_no, "expected 13 columns");
    require(!f[0].empty(), line_no, "empty vehicle_id");
    const std::string id(f[0]);
    const Timestamp start = parse_timestamp(f[2]);
    const Timestamp end = parse_timestamp(f[3]);
    require(end > start, line_no, "session must end after it starts");
    VehicleHistory& v = by_vehicle[id];
    v.vehicle_id = id;
    if (f[1] == "drive") {
      TripSession t;
      t.vehicle_id = id;
      t.start = start;
      t.end = end;
      t.distance_km = optional_field(f[4], line_no, "distance_km").value_or(0.0);
      require(t.distance_km >= 0.0, line_no, "negative distance");
      read_signal_means(t, std::span(f).subspan(6), line_no);
      v.trips.push_back(std::move(t));
    } else if (f[1] == "charge") {
      ChargeSession c;
      c.vehicle_id = id;
      c.start = start;
      c.end = end;
      c.soc_initial = optional_field(f[5], line_no, "soc_initial_pct");
      require(!c.soc_initial || (*c.soc_initial >= 0.0 && *c.soc_initial <= 100.0), line_no,
              "soc_initial_pct outside [0, 100]");
      v.charges.push_back(std::move(c));
    } else {
      require(false, line_no, "kind must be 'drive' or 'charge'");
    }
  }
  std::vector<VehicleHistory> fleet;
  fleet.reserve(by_vehicle.size());
  for (auto& [id, v] : by_vehicle) {
    std::stable_sort(v.trips.begin(), v.trips.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    std::stable_sort(v.charges.begin(), v.charges.end(),
                     [](const auto& a, const auto& b) { return a.start < b.start; });
    fleet.push_back(std::move(v));
  }
  return fleet;
}

void write_sessions_csv(std::ostream& out, std::span<const VehicleHistory> fleet) {
  out << kSessionHeader << '\n';
  for (const auto& v : fleet) {
    // Interleave both kinds by start time so the file reads chronologically.
    std::size_t ti = 0, ci = 0;
    while (ti < v.trips.size() || ci < v.charges.size()) {
      const bool take_trip =
          ci == v.charges.size() || (ti < v.trips.size() && v.trips[ti].start <= v.charges[ci].start);
      if (take_trip) {
        const TripSession& t = v.trips[ti++];
        out << v.vehicle_id << ",drive," << format_timestamp(t.start) << ',' << format_timestamp(t.end) << ','
            << text::format_number(t.distance_km) << ",,";
        write_signal_means(out, t);
        out << '\n';
      } else {
        const ChargeSession& c = v.charges[ci++];
        out << v.vehicle_id << ",charge," << format_timestamp(c.start) << ',' << format_timestamp(c.end) << ",,"
            << text::format_optional(c.soc_initial) << ",,,,,,,\n";
      }
    }
  }
}

namespace {
constexpr const char* kExampleHeader =
    "vehicle_id,date,prev_start,prev_end,prev_distance_km,prev_speed_mean,prev_speed_std,prev_accel_mean,"
    "prev_accel_std,prev_temp_mean,prev_sunload_mean,prev_soc_mean,charge_start,charge_end,charge_soc_initial_pct,"
    "target_departure_h,target_distance_km";
constexpr std::size_t kExampleColumns = 17;
}  // namespace

void write_daily_examples_csv(std::ostream& out, std::span<const DailyExample> examples) {
  out << kExampleHeader << '\n';
  for (const auto& ex : examples) {
    out << ex.vehicle_id << ',' << format_date(ex.date) << ',';
    if (const auto& p = ex.features.previous_trip) {
      out << format_timestamp(p->start) << ',' << format_timestamp(p->end) << ',' << text::format_number(p->distance_km)
          << ',';
      write_signal_means(out, *p);
    } else {
      out << ",,,,,,,,,";
    }
    out << ',';
    if (const auto& c = ex.features.last_charge) {
      out << format_timestamp(c->start) << ',' << format_timestamp(c->end) << ',' << text::format_optional(c->soc_initial);
    } else {
      out << ",,";
    }
    out << ',' << text::format_number(ex.target_departure) << ',' << text::format_number(ex.target_distance) << '\n';
  }
}

std::vector<DailyExample> read_daily_examples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim_cr(line) != kExampleHeader) {
    throw DataError("daily examples CSV: unexpected header");
  }
  std::vector<DailyExample> examples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = text::trim_cr(line);
    if (row.empty()) continue;
    const auto f = text::split_csv(row);
    require(f.size() == kExampleColumns, line_no, "expected 17 columns");
    DailyExample ex;
    ex.vehicle_id = std::string(f[0]);
    ex.date = parse_date(f[1]);
    ex.features.date = ex.date;
    if (!f[2].empty()) {
      TripSession p;
      p.vehicle_id = ex.vehicle_id;
      p.start = parse_timestamp(f[2]);
      p.end = parse_timestamp(f[3]);
      p.distance_km = optional_field(f[4], line_no, "prev_distance_km").value_or(0.0);
      read_signal_means(p, std::span(f).subspan(5, 7), line_no);
      ex.features.previous_trip = std::move(p);
    }
    if (!f[12].empty()) {
      ChargeSession c;
      c.vehicle_id = ex.vehicle_id;
      c.start = parse_timestamp(f[12]);
      c.end = parse_timestamp(f[13]);
      c.soc_initial = optional_field(f[14], line_no, "charge_soc_initial_pct");
      ex.features.last_charge = std::move(c);
    }
    auto dep = optional_field(f[15], line_no, "target_departure_h");
    auto dist = optional_field(f[16], line_no, "target_distance_km");
    require(dep && dist, line_no, "missing target");
    ex.target_departure = *dep;
    ex.target_distance = *dist;
    examples.push_back(std::move(ex));
  }
  return examples;
}

}  // namespace firstdrive
