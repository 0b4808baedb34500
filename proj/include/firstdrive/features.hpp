#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "firstdrive/civil_time.hpp"
#include "firstdrive/data_model.hpp"

namespace firstdrive {

using EncodedVector = std::vector<double>;

struct CyclicPair {
  double x = 0.0;  // sin component
  double y = 1.0;  // cos component
};

// sin/cos projection of a periodic quantity. Throws std::domain_error if max_f <= 0.
CyclicPair cyclic_encode(double f, double max_f);

enum class PartOfDay { Morning, Noon, Afternoon, Evening, Night };

// night [0,6), morning [6,11), noon [11,13), afternoon [13,17), evening [17,24)
PartOfDay part_of_day(int hour);
std::string_view to_string(PartOfDay p);
const std::vector<std::string>& part_of_day_vocabulary();
const std::vector<std::string>& weekday_vocabulary();

struct CalendarFields {
  int minute_of_hour = 0;
  int hour_of_day = 0;
  PartOfDay part = PartOfDay::Night;
  int day_of_month = 1;
  int day_of_week = 0;  // Monday = 0
  bool is_workday = true;
  CyclicPair minute_cyclic;
  CyclicPair hour_cyclic;
  CyclicPair day_of_week_cyclic;
  CyclicPair day_of_month_cyclic;
};

// Date fields come from the prediction date, time-of-day fields from the
// previous trip's start.
CalendarFields calendar_expand(Date date, Timestamp prev_trip_start);

// Throws std::invalid_argument for labels outside the vocabulary.
std::vector<double> one_hot(std::string_view category, std::span<const std::string> vocabulary);

// Welford mean/variance plus a trailing window of the last W values.
class RunningStats {
 public:
  static constexpr std::size_t kUnbounded = 0;

  explicit RunningStats(std::size_t window = kUnbounded) : window_(window) {}

  void push(double value);

  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  // Sample variance; 0 until two values have been seen.
  double variance() const { return count_ < 2 ? 0.0 : m2_ / static_cast<double>(count_ - 1); }
  double stddev() const;

  std::optional<double> historical_average() const;
  std::optional<double> running_average() const;
  std::size_t window() const { return window_; }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  std::size_t window_;
  std::deque<double> recent_;
};

RunningStats update_target_aggregates(RunningStats stats, double y);

// (x - mean) / std per dimension with the statistics as they stand; dims with
// std < 1e-9 (or fewer than two observations) map to 0, missing (NaN) values to
// 0. Pass-through dims keep their value, or the running mean when missing.
// Standardized values are clipped to [-clip, clip] (clip <= 0 disables): with
// only a handful of prior observations a dimension's std is unreliable and
// can produce values in the hundreds.
inline constexpr double kStandardizeClip = 5.0;
EncodedVector standardize_online(std::span<const double> x, std::span<const RunningStats> stats,
                                 const std::vector<bool>& pass_through, double clip = kStandardizeClip);

enum class FeatureKind { Numeric, CyclicPair, OneHot };

struct FeatureDescriptor {
  std::string name;
  FeatureKind kind = FeatureKind::Numeric;
  std::string source;
  double period = 0.0;                  // cyclic pairs
  std::vector<std::string> vocabulary;  // one-hot groups

  std::size_t width() const;
  bool operator==(const FeatureDescriptor&) const = default;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  // Names must be unique and known to the encoder.
  explicit FeatureSchema(std::vector<FeatureDescriptor> descriptors);

  // Every feature the encoder can produce, in canonical order.
  static FeatureSchema standard();

  const std::vector<FeatureDescriptor>& descriptors() const { return descriptors_; }
  std::size_t size() const { return descriptors_.size(); }
  std::size_t encoded_length() const { return length_; }
  std::size_t offset(std::size_t index) const { return offsets_[index]; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::vector<std::string> names() const;

  // Keeps schema order; throws std::invalid_argument for unknown names.
  FeatureSchema subset(std::span<const std::string> names) const;
  // Encoded columns of `names` inside this schema, ascending.
  std::vector<std::size_t> columns_of(std::span<const std::string> names) const;
  std::vector<bool> one_hot_mask() const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  bool operator==(const FeatureSchema& other) const { return descriptors_ == other.descriptors_; }

 private:
  std::vector<FeatureDescriptor> descriptors_;
  std::vector<std::size_t> offsets_;
  std::size_t length_ = 0;
};

// Per-vehicle encoder. transform() sees only state accumulated by update()
// calls for earlier days, so the vector for day t never depends on day t.
class FeaturePipeline {
 public:
  explicit FeaturePipeline(FeatureSchema schema = FeatureSchema::standard(), std::size_t running_window = 7);

  // Unscaled encoding, NaN marks missing values.
  EncodedVector encode_raw(const DailyExample& ex) const;
  EncodedVector transform(const DailyExample& ex) const;
  // Folds `ex` (features and both targets) into the running state.
  void update(const DailyExample& ex);

  const FeatureSchema& schema() const { return schema_; }
  const RunningStats& departure_history() const { return departure_history_; }
  const RunningStats& distance_history() const { return distance_history_; }

 private:
  FeatureSchema schema_;
  std::vector<bool> pass_through_;
  std::vector<RunningStats> dim_stats_;
  RunningStats departure_history_;
  RunningStats distance_history_;
};

}  // namespace firstdrive
