#include "firstdrive/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "firstdrive/errors.hpp"
#include "firstdrive/text_io.hpp"

namespace firstdrive {
namespace {

template <typename F>
void for_eligible(std::span<const LogEntry> log, F&& f) {
  for (const auto& e : log) {
    if (!e.warm_up) f(e);
  }
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return left ? s + fill : fill + s;
}

}  // namespace

std::string to_string(Target t) { return t == Target::Departure ? "departure" : "distance"; }

Target parse_target(const std::string& s) {
  if (s == "departure") return Target::Departure;
  if (s == "distance") return Target::Distance;
  throw std::invalid_argument("unknown target '" + s + "' (expected departure or distance)");
}

double default_threshold(Target t) { return t == Target::Departure ? 1.0 : 5.0; }

std::vector<Observation> encode_stream(FeaturePipeline pipeline, std::span<const DailyExample> examples, Target target) {
  std::vector<Observation> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(Observation{ex.date, pipeline.transform(ex), ex.target(target == Target::Departure)});
    pipeline.update(ex);
  }
  return out;
}

PredictionLog progressive_validate(OnlineRegressor& model, std::span<const Observation> stream,
                                   const ValidationOptions& options, std::string vehicle_id) {
  PredictionLog log{std::move(vehicle_id), {}};
  log.entries.reserve(stream.size());
  MeanBaseline fallback;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto& obs = stream[i];
    if (i > 0 && !(stream[i - 1].date < obs.date))
      throw std::invalid_argument("progressive_validate: stream is not strictly date-ordered at " +
                                  format_date(obs.date));
    LogEntry e;
    e.date = obs.date;
    e.y = obs.y;
    e.warm_up = i < options.warm_up;
    try {
      e.interval = model.predict_interval(obs.x);
    } catch (const InsufficientHistory&) {
      e.abstained = true;
      e.interval = fallback.predict_interval(obs.x);
    }
    log.entries.push_back(e);
    model.learn_one(obs.x, obs.y);
    fallback.learn(obs.y);
  }
  return log;
}

double mae(std::span<const LogEntry> log) {
  double sum = 0.0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    sum += std::fabs(e.y - e.interval.point);
    ++n;
  });
  if (n == 0) throw std::domain_error("mae: no eligible predictions");
  return sum / static_cast<double>(n);
}

double mape(std::span<const LogEntry> log, double epsilon) {
  double sum = 0.0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    if (std::fabs(e.y) <= epsilon) return;
    sum += std::fabs(e.y - e.interval.point) / std::fabs(e.y);
    ++n;
  });
  if (n == 0) throw std::domain_error("mape: no eligible predictions");
  return 100.0 * sum / static_cast<double>(n);
}

double pct_within(std::span<const LogEntry> log, double threshold) {
  std::size_t hit = 0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    if (std::fabs(e.y - e.interval.point) <= threshold) ++hit;
    ++n;
  });
  if (n == 0) throw std::domain_error("pct_within: no eligible predictions");
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

double picp(std::span<const LogEntry> log) {
  std::size_t inside = 0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    if (e.interval.lower <= e.y && e.y <= e.interval.upper) ++inside;
    ++n;
  });
  return n == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(n);
}

double mpiw(std::span<const LogEntry> log) {
  double sum = 0.0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    sum += e.interval.upper - e.interval.lower;
    ++n;
  });
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<CurvePoint> over_time_curve(std::span<const LogEntry> log, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("over_time_curve: stride must be positive");
  std::vector<CurvePoint> curve;
  double sum = 0.0;
  std::size_t n = 0;
  for_eligible(log, [&](const LogEntry& e) {
    sum += std::fabs(e.y - e.interval.point);
    ++n;
    if (n % stride == 0) curve.push_back({n, sum / static_cast<double>(n)});
  });
  if (n > 0 && (curve.empty() || curve.back().drives != n)) curve.push_back({n, sum / static_cast<double>(n)});
  return curve;
}

Metrics compute_metrics(std::span<const PredictionLog> logs, double threshold) {
  std::vector<LogEntry> pooled;
  Metrics m;
  for (const auto& log : logs) {
    for (const auto& e : log.entries) {
      if (e.warm_up) continue;
      pooled.push_back(e);
      if (e.abstained) ++m.abstentions;
    }
  }
  m.count = pooled.size();
  if (m.count == 0) return m;
  m.mae = mae(pooled);
  try {
    m.mape = mape(pooled);
  } catch (const std::domain_error&) {
    m.mape.reset();
  }
  m.pct_within = pct_within(pooled, threshold);
  m.picp = picp(pooled);
  m.mpiw = mpiw(pooled);
  return m;
}

MetricsReport build_report(const std::string& model, Target target, std::span<const PredictionLog> logs,
                           double threshold, std::size_t curve_stride) {
  if (curve_stride == 0) throw std::invalid_argument("build_report: curve stride must be positive");
  MetricsReport r;
  r.model = model;
  r.target = target;
  r.threshold = threshold;
  r.aggregate = compute_metrics(logs, threshold);
  std::vector<const PredictionLog*> ordered;
  for (const auto& log : logs) ordered.push_back(&log);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const PredictionLog* a, const PredictionLog* b) { return a->vehicle_id < b->vehicle_id; });
  double mae_sum = 0.0;
  std::size_t with_data = 0;
  std::vector<double> abs_sum;
  std::vector<std::size_t> abs_count;
  for (const PredictionLog* log : ordered) {
    const Metrics m = compute_metrics(std::span<const PredictionLog>(log, 1), threshold);
    r.vehicles.emplace_back(log->vehicle_id, m);
    if (m.count > 0) {
      mae_sum += m.mae;
      ++with_data;
    }
    for (std::size_t i = 0; i < log->entries.size(); ++i) {
      const auto& e = log->entries[i];
      if (e.warm_up) continue;
      if (abs_sum.size() <= i) {
        abs_sum.resize(i + 1, 0.0);
        abs_count.resize(i + 1, 0);
      }
      abs_sum[i] += std::fabs(e.y - e.interval.point);
      ++abs_count[i];
    }
  }
  r.per_vehicle_mean_mae = with_data == 0 ? 0.0 : mae_sum / static_cast<double>(with_data);
  double cum = 0.0;
  std::size_t cum_n = 0;
  for (std::size_t i = 0; i < abs_sum.size(); ++i) {
    cum += abs_sum[i];
    cum_n += abs_count[i];
    const bool sample = (i + 1) % curve_stride == 0 || i + 1 == abs_sum.size();
    if (sample && cum_n > 0) r.over_time.push_back({i + 1, cum / static_cast<double>(cum_n)});
  }
  return r;
}

std::vector<PredictionLog> evaluate_fleet(const ModelSpec& spec,
                                          std::span<const std::pair<std::string, std::vector<Observation>>> streams,
                                          double confidence, const ValidationOptions& options) {
  std::vector<PredictionLog> logs;
  logs.reserve(streams.size());
  for (std::size_t v = 0; v < streams.size(); ++v) {
    const auto& [vehicle, stream] = streams[v];
    if (stream.empty()) {
      logs.push_back(PredictionLog{vehicle, {}});
      continue;
    }
    ModelSpec per_vehicle = spec;
    per_vehicle.seed = derive_seed(spec.seed, v);
    auto model = make_model(per_vehicle, stream.front().x.size(), confidence);
    logs.push_back(progressive_validate(*model, stream, options, vehicle));
  }
  return logs;
}

nlohmann::json to_json(const Metrics& m) {
  return {{"count", m.count},
          {"abstentions", m.abstentions},
          {"mae", m.mae},
          {"mape", m.mape ? nlohmann::json(*m.mape) : nlohmann::json()},
          {"pct_within", m.pct_within},
          {"picp", m.picp},
          {"mpiw", m.mpiw}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& [id, m] : r.vehicles) {
    auto j = to_json(m);
    j["vehicle_id"] = id;
    vehicles.push_back(std::move(j));
  }
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : r.over_time) curve.push_back({p.drives, p.mae});
  return {{"model", r.model},
          {"target", to_string(r.target)},
          {"threshold", r.threshold},
          {"aggregate", to_json(r.aggregate)},
          {"per_vehicle_mean_mae", r.per_vehicle_mean_mae},
          {"vehicles", vehicles},
          {"over_time", curve}};
}

Metrics metrics_from_json(const nlohmann::json& j) {
  try {
    Metrics m;
    m.count = j.at("count").get<std::size_t>();
    m.abstentions = j.at("abstentions").get<std::size_t>();
    m.mae = j.at("mae").get<double>();
    if (!j.at("mape").is_null()) m.mape = j.at("mape").get<double>();
    m.pct_within = j.at("pct_within").get<double>();
    m.picp = j.at("picp").get<double>();
    m.mpiw = j.at("mpiw").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("metrics JSON: ") + e.what());
  }
}

MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.model = j.at("model").get<std::string>();
    r.target = parse_target(j.at("target").get<std::string>());
    r.threshold = j.at("threshold").get<double>();
    r.aggregate = metrics_from_json(j.at("aggregate"));
    r.per_vehicle_mean_mae = j.at("per_vehicle_mean_mae").get<double>();
    for (const auto& v : j.at("vehicles")) r.vehicles.emplace_back(v.at("vehicle_id").get<std::string>(), metrics_from_json(v));
    for (const auto& p : j.at("over_time")) r.over_time.push_back({p.at(0).get<std::size_t>(), p.at(1).get<double>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("report JSON: ") + e.what());
  }
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> reports) {
  using text::format_number;
  out << "model,target,count,mae,mape,pct_within,picp,mpiw,abstentions\n";
  for (const auto& r : reports) {
    const auto& m = r.aggregate;
    out << r.model << ',' << to_string(r.target) << ',' << m.count << ',' << format_number(m.mae) << ','
        << text::format_optional(m.mape) << ',' << format_number(m.pct_within) << ',' << format_number(m.picp) << ','
        << format_number(m.mpiw) << ',' << m.abstentions << '\n';
  }
}

void write_per_vehicle_csv(std::ostream& out, std::span<const MetricsReport> reports) {
  using text::format_number;
  out << "model,target,vehicle_id,count,mae,mape,pct_within,picp,mpiw\n";
  for (const auto& r : reports) {
    for (const auto& [id, m] : r.vehicles) {
      out << r.model << ',' << to_string(r.target) << ',' << id << ',' << m.count << ',' << format_number(m.mae) << ','
          << text::format_optional(m.mape) << ',' << format_number(m.pct_within) << ',' << format_number(m.picp) << ','
          << format_number(m.mpiw) << '\n';
    }
  }
}

void write_over_time_csv(std::ostream& out, std::span<const MetricsReport> reports) {
  out << "model,target,drive_index,cumulative_mae\n";
  for (const auto& r : reports) {
    for (const auto& p : r.over_time)
      out << r.model << ',' << to_string(r.target) << ',' << p.drives << ',' << text::format_number(p.mae) << '\n';
  }
}

std::string render_table(std::span<const MetricsReport> reports) {
  if (reports.empty()) return {};
  const Target target = reports.front().target;
  const bool departure = target == Target::Departure;
  const std::string unit = departure ? "h" : "km";
  const double threshold = reports.front().threshold;
  const std::string within = departure ? "% err <= " + text::format_number(threshold * 60.0) + " min"
                                       : "% err <= " + text::format_number(threshold) + " km";
  std::string s;
  s += "Target: " + to_string(target) + "\n\n";
  s += pad("Model", 10, true) + pad("MAE (" + unit + ")", 12, false) + pad("MAPE (%)", 12, false) +
       pad(within, 18, false) + "\n";
  for (const auto& r : reports) {
    const auto& m = r.aggregate;
    s += pad(r.model, 10, true) + pad(fixed(m.mae, 2), 12, false) + pad(m.mape ? fixed(*m.mape, 1) : "-", 12, false) +
         pad(fixed(m.pct_within, 1), 18, false) + "\n";
  }
  s += "\n" + pad("Model", 10, true) + pad("PICP", 12, false) + pad("MPIW (" + unit + ")", 14, false) + "\n";
  for (const auto& r : reports) {
    s += pad(r.model, 10, true) + pad(fixed(r.aggregate.picp, 3), 12, false) + pad(fixed(r.aggregate.mpiw, 2), 14, false) +
         "\n";
  }
  return s;
}

}  // namespace firstdrive
