#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "firstdrive/data_model.hpp"
#include "firstdrive/features.hpp"
#include "firstdrive/models.hpp"

namespace firstdrive {

enum class Target { Departure, Distance };

std::string to_string(Target t);
// "departure" or "distance"; throws std::invalid_argument otherwise.
Target parse_target(const std::string& s);
// 1 h for departure, 5 km for distance.
double default_threshold(Target t);
// Smallest |y| that counts towards MAPE (0.1 h or 0.1 km).
inline constexpr double kMapeEpsilon = 0.1;

struct Observation {
  Date date;
  EncodedVector x;
  double y = 0.0;
};

// Standardized feature vectors for one vehicle's example stream: each vector is
// encoded with the pipeline state before its own example is folded in.
std::vector<Observation> encode_stream(FeaturePipeline pipeline, std::span<const DailyExample> examples, Target target);

struct LogEntry {
  Date date;
  double y = 0.0;
  PredictionInterval interval;
  bool warm_up = false;
  bool abstained = false;  // model had no answer; interval comes from the mean fallback
};

struct PredictionLog {
  std::string vehicle_id;
  std::vector<LogEntry> entries;
};

struct ValidationOptions {
  std::size_t warm_up = 20;
};

// Predict-then-learn over a date-ordered stream. Throws std::invalid_argument
// when dates are not strictly increasing.
PredictionLog progressive_validate(OnlineRegressor& model, std::span<const Observation> stream,
                                   const ValidationOptions& options = {}, std::string vehicle_id = {});

// Point metrics over the non-warm-up entries. mae / mape / pct_within throw
// std::domain_error when no entry is eligible.
double mae(std::span<const LogEntry> log);
double mape(std::span<const LogEntry> log, double epsilon = kMapeEpsilon);
double pct_within(std::span<const LogEntry> log, double threshold);
// Interval metrics over the non-warm-up entries (0 when there are none).
double picp(std::span<const LogEntry> log);
double mpiw(std::span<const LogEntry> log);

struct CurvePoint {
  std::size_t drives = 0;  // eligible predictions seen so far
  double mae = 0.0;
};
// Cumulative MAE of the non-warm-up entries after every `stride` of them, plus
// the final value.
std::vector<CurvePoint> over_time_curve(std::span<const LogEntry> log, std::size_t stride);

struct Metrics {
  std::size_t count = 0;
  std::size_t abstentions = 0;
  double mae = 0.0;
  std::optional<double> mape;
  double pct_within = 0.0;
  double picp = 0.0;
  double mpiw = 0.0;
};

// Metrics of one or more logs pooled together; count 0 when nothing is eligible.
Metrics compute_metrics(std::span<const PredictionLog> logs, double threshold);

struct MetricsReport {
  std::string model;
  Target target = Target::Departure;
  double threshold = 0.0;
  Metrics aggregate;               // pooled over every vehicle
  double per_vehicle_mean_mae = 0.0;
  std::vector<std::pair<std::string, Metrics>> vehicles;  // vehicle-id order
  // Cumulative pooled MAE by drive index (index = position in a vehicle's stream).
  std::vector<CurvePoint> over_time;
};

MetricsReport build_report(const std::string& model, Target target, std::span<const PredictionLog> logs,
                           double threshold, std::size_t curve_stride = 10);

// Runs a fresh model per vehicle (seed derived from spec.seed and the vehicle's
// position) over each stream.
std::vector<PredictionLog> evaluate_fleet(const ModelSpec& spec,
                                          std::span<const std::pair<std::string, std::vector<Observation>>> streams,
                                          double confidence = 0.90, const ValidationOptions& options = {});

nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const MetricsReport& r);
// Inverse of to_json; throws DataError on malformed input.
Metrics metrics_from_json(const nlohmann::json& j);
MetricsReport report_from_json(const nlohmann::json& j);
// One row per (model, target): model,target,count,mae,mape,pct_within,picp,mpiw,abstentions
void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports);
// model,target,vehicle_id,count,mae,mape,pct_within,picp,mpiw
void write_per_vehicle_csv(std::ostream& out, std::span<const MetricsReport> reports);
// model,target,drive_index,cumulative_mae
void write_over_time_csv(std::ostream& out, std::span<const MetricsReport> reports);
// Point-accuracy table (Model, MAE, MAPE, % within) followed by an interval
// table (Model, PICP, MPIW) for one target.
std::string render_table(std::span<const MetricsReport> reports);

}  // namespace firstdrive
