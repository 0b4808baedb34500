#include "firstdrive/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>

namespace firstdrive {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinStd = 1e-9;

struct TimeOfDay {
  int hour = 0;
  int minute = 0;
};

TimeOfDay time_of_day(Timestamp t) {
  const std::chrono::hh_mm_ss hms{t - midnight_of(date_of(t))};
  return {static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count())};
}

int weekday_index(Date d) {
  // iso_encoding: Monday = 1 ... Sunday = 7
  return static_cast<int>(std::chrono::weekday{d}.iso_encoding()) - 1;
}

struct EncodeContext {
  const RawFeatures& raw;
  const RunningStats& departures;
  const RunningStats& distances;
};

using Extractor = std::function<void(const EncodeContext&, std::span<double>)>;

void put_cyclic(std::span<double> out, double f, double period) {
  const CyclicPair c = cyclic_encode(f, period);
  out[0] = c.x;
  out[1] = c.y;
}

void put_one_hot(std::span<double> out, std::string_view label, std::span<const std::string> vocabulary) {
  const auto v = one_hot(label, vocabulary);
  std::copy(v.begin(), v.end(), out.begin());
}

void put_optional(std::span<double> out, const std::optional<double>& v) { out[0] = v.value_or(kNaN); }

// Registry of every feature the encoder knows: descriptor + extractor.
struct Registry {
  std::vector<FeatureDescriptor> descriptors;
  std::map<std::string, Extractor, std::less<>> extractors;

  void add(FeatureDescriptor d, Extractor e) {
    extractors.emplace(d.name, std::move(e));
    descriptors.push_back(std::move(d));
  }

  void add_time_of_day(const std::string& prefix, std::function<std::optional<Timestamp>(const RawFeatures&)> when) {
    auto tod = [when](const EncodeContext& c) -> std::optional<TimeOfDay> {
      auto t = when(c.raw);
      if (!t) return std::nullopt;
      return time_of_day(*t);
    };
    add({prefix + ".hour", FeatureKind::Numeric, prefix, 0.0, {}}, [tod](const EncodeContext& c, std::span<double> o) {
      auto t = tod(c);
      o[0] = t ? t->hour : kNaN;
    });
    add({prefix + ".minute", FeatureKind::Numeric, prefix, 0.0, {}},
        [tod](const EncodeContext& c, std::span<double> o) {
          auto t = tod(c);
          o[0] = t ? t->minute : kNaN;
        });
    add({prefix + ".hour.cyclic", FeatureKind::CyclicPair, prefix, 24.0, {}},
        [tod](const EncodeContext& c, std::span<double> o) {
          if (auto t = tod(c)) {
            put_cyclic(o, t->hour, 24.0);
          } else {
            o[0] = o[1] = kNaN;
          }
        });
    add({prefix + ".minute.cyclic", FeatureKind::CyclicPair, prefix, 60.0, {}},
        [tod](const EncodeContext& c, std::span<double> o) {
          if (auto t = tod(c)) {
            put_cyclic(o, t->minute, 60.0);
          } else {
            o[0] = o[1] = kNaN;
          }
        });
    add({prefix + ".part_of_day", FeatureKind::OneHot, prefix, 0.0, part_of_day_vocabulary()},
        [tod](const EncodeContext& c, std::span<double> o) {
          if (auto t = tod(c)) {
            put_one_hot(o, to_string(part_of_day(t->hour)), part_of_day_vocabulary());
          } else {
            std::fill(o.begin(), o.end(), kNaN);
          }
        });
  }

  void add_trip_signal(const std::string& name, Signal s, bool want_std) {
    add({"prev_trip." + name, FeatureKind::Numeric, "prev_trip", 0.0, {}},
        [s, want_std](const EncodeContext& c, std::span<double> o) {
          const auto& p = c.raw.previous_trip;
          if (!p) {
            o[0] = kNaN;
            return;
          }
          put_optional(o, want_std ? p->signal(s).std : p->signal(s).mean);
        });
  }
};

const Registry& registry() {
  static const Registry r = [] {
    Registry reg;
    reg.add({"date.day_of_week", FeatureKind::Numeric, "date", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { o[0] = weekday_index(c.raw.date); });
    reg.add({"date.day_of_week.cyclic", FeatureKind::CyclicPair, "date", 7.0, {}},
            [](const EncodeContext& c, std::span<double> o) { put_cyclic(o, weekday_index(c.raw.date), 7.0); });
    reg.add({"date.day_of_week.onehot", FeatureKind::OneHot, "date", 0.0, weekday_vocabulary()},
            [](const EncodeContext& c, std::span<double> o) {
              put_one_hot(o, weekday_vocabulary()[weekday_index(c.raw.date)], weekday_vocabulary());
            });
    reg.add({"date.day_of_month", FeatureKind::Numeric, "date", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) {
              o[0] = static_cast<unsigned>(std::chrono::year_month_day{c.raw.date}.day());
            });
    reg.add({"date.day_of_month.cyclic", FeatureKind::CyclicPair, "date", 31.0, {}},
            [](const EncodeContext& c, std::span<double> o) {
              put_cyclic(o, static_cast<unsigned>(std::chrono::year_month_day{c.raw.date}.day()), 31.0);
            });
    reg.add({"date.is_workday", FeatureKind::Numeric, "date", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { o[0] = weekday_index(c.raw.date) < 5 ? 1.0 : 0.0; });

    reg.add_time_of_day("prev_trip.start", [](const RawFeatures& r) -> std::optional<Timestamp> {
      if (r.previous_trip) return r.previous_trip->start;
      return std::nullopt;
    });
    reg.add_time_of_day("prev_trip.end", [](const RawFeatures& r) -> std::optional<Timestamp> {
      if (r.previous_trip) return r.previous_trip->end;
      return std::nullopt;
    });
    reg.add({"prev_trip.distance", FeatureKind::Numeric, "prev_trip", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) {
              o[0] = c.raw.previous_trip ? c.raw.previous_trip->distance_km : kNaN;
            });
    reg.add({"prev_trip.duration", FeatureKind::Numeric, "prev_trip", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) {
              o[0] = c.raw.previous_trip ? c.raw.previous_trip->duration_seconds() / 3600.0 : kNaN;
            });
    reg.add_trip_signal("speed_mean", Signal::Speed, false);
    reg.add_trip_signal("speed_std", Signal::Speed, true);
    reg.add_trip_signal("accel_mean", Signal::Acceleration, false);
    reg.add_trip_signal("accel_std", Signal::Acceleration, true);
    reg.add_trip_signal("temp_mean", Signal::Temperature, false);
    reg.add_trip_signal("sunload_mean", Signal::SunLoad, false);
    reg.add_trip_signal("soc_mean", Signal::StateOfCharge, false);

    reg.add_time_of_day("last_charge.start", [](const RawFeatures& r) -> std::optional<Timestamp> {
      if (r.last_charge) return r.last_charge->start;
      return std::nullopt;
    });
    reg.add({"last_charge.soc_initial", FeatureKind::Numeric, "last_charge", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) {
              o[0] = c.raw.last_charge ? c.raw.last_charge->soc_initial.value_or(kNaN) : kNaN;
            });

    reg.add({"history.departure_mean", FeatureKind::Numeric, "target_history", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { put_optional(o, c.departures.historical_average()); });
    reg.add({"history.departure_running", FeatureKind::Numeric, "target_history", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { put_optional(o, c.departures.running_average()); });
    reg.add({"history.distance_mean", FeatureKind::Numeric, "target_history", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { put_optional(o, c.distances.historical_average()); });
    reg.add({"history.distance_running", FeatureKind::Numeric, "target_history", 0.0, {}},
            [](const EncodeContext& c, std::span<double> o) { put_optional(o, c.distances.running_average()); });
    return reg;
  }();
  return r;
}

const char* kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Numeric:
      return "numeric";
    case FeatureKind::CyclicPair:
      return "cyclic";
    case FeatureKind::OneHot:
      return "one_hot";
  }
  return "numeric";
}

FeatureKind kind_from_name(const std::string& s) {
  if (s == "numeric") return FeatureKind::Numeric;
  if (s == "cyclic") return FeatureKind::CyclicPair;
  if (s == "one_hot") return FeatureKind::OneHot;
  throw std::invalid_argument("unknown feature kind '" + s + "'");
}

}  // namespace

CyclicPair cyclic_encode(double f, double max_f) {
  if (!(max_f > 0.0)) throw std::domain_error("cyclic_encode: period must be positive");
  const double angle = 2.0 * std::numbers::pi * f / max_f;
  return {std::sin(angle), std::cos(angle)};
}

PartOfDay part_of_day(int hour) {
  if (hour < 6) return PartOfDay::Night;
  if (hour < 11) return PartOfDay::Morning;
  if (hour < 13) return PartOfDay::Noon;
  if (hour < 17) return PartOfDay::Afternoon;
  return PartOfDay::Evening;
}

std::string_view to_string(PartOfDay p) {
  switch (p) {
    case PartOfDay::Morning:
      return "morning";
    case PartOfDay::Noon:
      return "noon";
    case PartOfDay::Afternoon:
      return "afternoon";
    case PartOfDay::Evening:
      return "evening";
    case PartOfDay::Night:
      return "night";
  }
  return "night";
}

const std::vector<std::string>& part_of_day_vocabulary() {
  static const std::vector<std::string> v{"morning", "noon", "afternoon", "evening", "night"};
  return v;
}

const std::vector<std::string>& weekday_vocabulary() {
  static const std::vector<std::string> v{"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
  return v;
}

CalendarFields calendar_expand(Date date, Timestamp prev_trip_start) {
  CalendarFields f;
  const TimeOfDay tod = time_of_day(prev_trip_start);
  f.hour_of_day = tod.hour;
  f.minute_of_hour = tod.minute;
  f.part = part_of_day(tod.hour);
  f.day_of_week = weekday_index(date);
  f.day_of_month = static_cast<int>(static_cast<unsigned>(std::chrono::year_month_day{date}.day()));
  f.is_workday = f.day_of_week < 5;
  f.minute_cyclic = cyclic_encode(f.minute_of_hour, 60.0);
  f.hour_cyclic = cyclic_encode(f.hour_of_day, 24.0);
  f.day_of_week_cyclic = cyclic_encode(f.day_of_week, 7.0);
  f.day_of_month_cyclic = cyclic_encode(f.day_of_month, 31.0);
  return f;
}

std::vector<double> one_hot(std::string_view category, std::span<const std::string> vocabulary) {
  std::vector<double> out(vocabulary.size(), 0.0);
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), category);
  if (it == vocabulary.end()) throw std::invalid_argument("one_hot: unknown label '" + std::string(category) + "'");
  out[static_cast<std::size_t>(it - vocabulary.begin())] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------

void RunningStats::push(double value) {
  ++count_;
  const double delta = value - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (value - mean_);
  if (window_ != kUnbounded) {
    recent_.push_back(value);
    if (recent_.size() > window_) recent_.pop_front();
  }
}

double RunningStats::stddev() const { return std::sqrt(variance()); }

std::optional<double> RunningStats::historical_average() const {
  if (count_ == 0) return std::nullopt;
  return mean_;
}

std::optional<double> RunningStats::running_average() const {
  if (count_ == 0) return std::nullopt;
  if (window_ == kUnbounded) return mean_;
  double sum = 0.0;
  for (double v : recent_) sum += v;
  return sum / static_cast<double>(recent_.size());
}

RunningStats update_target_aggregates(RunningStats stats, double y) {
  stats.push(y);
  return stats;
}

EncodedVector standardize_online(std::span<const double> x, std::span<const RunningStats> stats,
                                 const std::vector<bool>& pass_through, double clip) {
  EncodedVector out(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const RunningStats& s = stats[i];
    if (pass_through[i]) {
      out[i] = std::isnan(x[i]) ? (s.count() > 0 ? s.mean() : 0.0) : x[i];
      continue;
    }
    if (std::isnan(x[i])) continue;
    const double sd = s.stddev();
    if (s.count() < 2 || sd < kMinStd) continue;
    out[i] = (x[i] - s.mean()) / sd;
    if (clip > 0.0) out[i] = std::clamp(out[i], -clip, clip);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t FeatureDescriptor::width() const {
  switch (kind) {
    case FeatureKind::Numeric:
      return 1;
    case FeatureKind::CyclicPair:
      return 2;
    case FeatureKind::OneHot:
      return vocabulary.size();
  }
  return 1;
}

FeatureSchema::FeatureSchema(std::vector<FeatureDescriptor> descriptors) : descriptors_(std::move(descriptors)) {
  const auto& reg = registry();
  offsets_.reserve(descriptors_.size());
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    const auto& d = descriptors_[i];
    if (!reg.extractors.contains(d.name)) throw std::invalid_argument("unknown feature '" + d.name + "'");
    for (std::size_t j = 0; j < i; ++j) {
      if (descriptors_[j].name == d.name) throw std::invalid_argument("duplicate feature '" + d.name + "'");
    }
    const auto canonical = std::find_if(reg.descriptors.begin(), reg.descriptors.end(),
                                        [&](const FeatureDescriptor& c) { return c.name == d.name; });
    if (!(*canonical == d)) throw std::invalid_argument("feature '" + d.name + "' does not match its encoder");
    offsets_.push_back(length_);
    length_ += d.width();
  }
}

FeatureSchema FeatureSchema::standard() { return FeatureSchema(registry().descriptors); }

std::optional<std::size_t> FeatureSchema::find(std::string_view name) const {
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    if (descriptors_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<std::string> FeatureSchema::names() const {
  std::vector<std::string> out;
  out.reserve(descriptors_.size());
  for (const auto& d : descriptors_) out.push_back(d.name);
  return out;
}

FeatureSchema FeatureSchema::subset(std::span<const std::string> names) const {
  for (const auto& n : names) {
    if (!find(n)) throw std::invalid_argument("feature '" + n + "' is not in the schema");
  }
  std::vector<FeatureDescriptor> kept;
  for (const auto& d : descriptors_) {
    if (std::find(names.begin(), names.end(), d.name) != names.end()) kept.push_back(d);
  }
  return FeatureSchema(std::move(kept));
}

std::vector<std::size_t> FeatureSchema::columns_of(std::span<const std::string> names) const {
  for (const auto& n : names) {
    if (!find(n)) throw std::invalid_argument("feature '" + n + "' is not in the schema");
  }
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    if (std::find(names.begin(), names.end(), descriptors_[i].name) == names.end()) continue;
    for (std::size_t k = 0; k < descriptors_[i].width(); ++k) cols.push_back(offsets_[i] + k);
  }
  return cols;
}

std::vector<bool> FeatureSchema::one_hot_mask() const {
  std::vector<bool> mask(length_, false);
  for (std::size_t i = 0; i < descriptors_.size(); ++i) {
    if (descriptors_[i].kind != FeatureKind::OneHot) continue;
    for (std::size_t k = 0; k < descriptors_[i].width(); ++k) mask[offsets_[i] + k] = true;
  }
  return mask;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : descriptors_) {
    nlohmann::json j{{"name", d.name}, {"kind", kind_name(d.kind)}, {"source", d.source}};
    if (d.kind == FeatureKind::CyclicPair) j["period"] = d.period;
    if (d.kind == FeatureKind::OneHot) j["vocabulary"] = d.vocabulary;
    arr.push_back(std::move(j));
  }
  return nlohmann::json{{"version", 1}, {"encoded_length", length_}, {"features", std::move(arr)}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw std::invalid_argument("feature schema: unsupported version");
  std::vector<FeatureDescriptor> ds;
  for (const auto& f : j.at("features")) {
    FeatureDescriptor d;
    d.name = f.at("name").get<std::string>();
    d.kind = kind_from_name(f.at("kind").get<std::string>());
    d.source = f.at("source").get<std::string>();
    if (d.kind == FeatureKind::CyclicPair) d.period = f.at("period").get<double>();
    if (d.kind == FeatureKind::OneHot) d.vocabulary = f.at("vocabulary").get<std::vector<std::string>>();
    ds.push_back(std::move(d));
  }
  return FeatureSchema(std::move(ds));
}

// ---------------------------------------------------------------------------

FeaturePipeline::FeaturePipeline(FeatureSchema schema, std::size_t running_window)
    : schema_(std::move(schema)),
      pass_through_(schema_.one_hot_mask()),
      dim_stats_(schema_.encoded_length()),
      departure_history_(running_window),
      distance_history_(running_window) {}

EncodedVector FeaturePipeline::encode_raw(const DailyExample& ex) const {
  const auto& reg = registry();
  EncodedVector out(schema_.encoded_length(), kNaN);
  const EncodeContext ctx{ex.features, departure_history_, distance_history_};
  for (std::size_t i = 0; i < schema_.size(); ++i) {
    const auto& d = schema_.descriptors()[i];
    reg.extractors.find(d.name)->second(ctx, std::span(out).subspan(schema_.offset(i), d.width()));
  }
  return out;
}

EncodedVector FeaturePipeline::transform(const DailyExample& ex) const {
  const EncodedVector raw = encode_raw(ex);
  return standardize_online(raw, dim_stats_, pass_through_);
}

void FeaturePipeline::update(const DailyExample& ex) {
  const EncodedVector raw = encode_raw(ex);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isnan(raw[i])) dim_stats_[i].push(raw[i]);
  }
  departure_history_.push(ex.target_departure);
  distance_history_.push(ex.target_distance);
}

}  // namespace firstdrive
