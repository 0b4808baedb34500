#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "firstdrive/errors.hpp"
#include "firstdrive/evaluation.hpp"
#include "firstdrive/rng.hpp"

using namespace firstdrive;

namespace {

const Date kDay0 = parse_date("2021-01-04");

LogEntry entry(double y, double point, double lower, double upper, bool warm_up = false) {
  LogEntry e;
  e.y = y;
  e.interval = PredictionInterval{point, lower, upper, std::nullopt};
  e.warm_up = warm_up;
  return e;
}

LogEntry point_entry(double y, double point) { return entry(y, point, point, point); }

std::vector<Observation> stream_of(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
  std::vector<Observation> out;
  for (std::size_t i = 0; i < ys.size(); ++i) out.push_back({kDay0 + std::chrono::days(i), xs[i], ys[i]});
  return out;
}

std::vector<Observation> noisy_stream(std::uint64_t seed, std::size_t n, std::size_t d = 2) {
  Rng rng(seed);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(d);
    for (auto& v : x) v = rng.normal();
    xs.push_back(x);
    ys.push_back(5 + 2 * x[0] + rng.normal());
  }
  return stream_of(xs, ys);
}

}  // namespace

TEST_CASE("point metric examples") {
  std::vector<LogEntry> one{point_entry(10, 12)};
  CHECK(mae(one) == doctest::Approx(2.0));
  CHECK(mape(one) == doctest::Approx(20.0));

  std::vector<LogEntry> exact{point_entry(3, 3), point_entry(7, 7)};
  CHECK(mae(exact) == 0.0);
  CHECK(pct_within(exact, 0.0) == 100.0);

  std::vector<LogEntry> two{point_entry(10, 12), point_entry(20, 26)};
  CHECK(mae(two) == doctest::Approx(4.0));
  CHECK(pct_within(two, 5.0) == doctest::Approx(50.0));

  // Targets at or below the guard only leave MAPE.
  std::vector<LogEntry> tiny{point_entry(0.05, 1.0), point_entry(10, 11)};
  CHECK(mape(tiny) == doctest::Approx(10.0));
  CHECK(mae(tiny) == doctest::Approx((0.95 + 1.0) / 2));

  std::vector<LogEntry> warm{entry(1, 1, 1, 1, true)};
  CHECK_THROWS_AS(mae(warm), std::domain_error);
  CHECK_THROWS_AS(mape(std::vector<LogEntry>{point_entry(0.0, 1.0)}), std::domain_error);
  CHECK_THROWS_AS(pct_within(std::vector<LogEntry>{}, 1.0), std::domain_error);
}

TEST_CASE("interval metric examples") {
  std::vector<LogEntry> inside{entry(5, 5, 0, 10), entry(1, 2, 1, 3)};
  CHECK(picp(inside) == 1.0);
  std::vector<LogEntry> three_of_four{entry(5, 5, 0, 10), entry(5, 5, 4, 6), entry(5, 5, 5, 5), entry(9, 5, 4, 6)};
  CHECK(picp(three_of_four) == doctest::Approx(0.75));
  CHECK(picp(std::vector<LogEntry>{entry(2, 2, 2, 2)}) == 1.0);

  std::vector<LogEntry> widths{entry(0, 0, -5, 5), entry(0, 0, -1, 1)};
  CHECK(mpiw(widths) == doctest::Approx(6.0));
  CHECK(mpiw(std::vector<LogEntry>{entry(1, 1, 1, 1), entry(2, 2, 2, 2)}) == 0.0);
  CHECK(picp(std::vector<LogEntry>{}) == 0.0);
}

TEST_CASE("over-time curve examples") {
  std::vector<LogEntry> flat;
  for (int i = 0; i < 30; ++i) flat.push_back(point_entry(2, 0));
  for (const auto& p : over_time_curve(flat, 5)) CHECK(p.mae == doctest::Approx(2.0));
  CHECK(over_time_curve(flat, 5).size() == 6);

  std::vector<LogEntry> drift;
  for (int i = 0; i < 20; ++i) drift.push_back(point_entry(1, 1));
  for (int i = 0; i < 20; ++i) drift.push_back(point_entry(11, 1));
  auto curve = over_time_curve(drift, 1);
  for (std::size_t i = 20; i < curve.size(); ++i) CHECK(curve[i].mae > curve[i - 1].mae);

  auto single = over_time_curve(flat, 100);
  REQUIRE(single.size() == 1);
  CHECK(single[0].drives == 30);
  CHECK_THROWS_AS(over_time_curve(flat, 0), std::invalid_argument);
}

TEST_CASE("progressive validation on trivial models") {
  MeanBaseline baseline;
  std::vector<std::vector<double>> xs(25, std::vector<double>{});
  auto constant = stream_of(xs, std::vector<double>(25, 5.0));
  auto log = progressive_validate(baseline, constant);
  REQUIRE(log.entries.size() == 25);
  CHECK(mae(log.entries) == 0.0);
  for (std::size_t i = 0; i < 25; ++i) CHECK(log.entries[i].warm_up == (i < 20));

  QrModel frozen(2, QrOptions{.learning_rate = 0.0});
  auto noisy = noisy_stream(1, 60);
  auto flog = progressive_validate(frozen, noisy);
  double mean_abs = 0.0;
  for (std::size_t i = 20; i < noisy.size(); ++i) mean_abs += std::abs(noisy[i].y);
  CHECK(mae(flog.entries) == doctest::Approx(mean_abs / 40));
}

TEST_CASE("predict comes before learn") {
  // A memorizing model scores perfectly when it is (wrongly) taught first.
  auto stream = noisy_stream(2, 80);
  QknnModel correct(2, QknnOptions{.k = 1});
  auto log = progressive_validate(correct, stream);

  QknnModel oracle(2, QknnOptions{.k = 1}), swapped(2, QknnOptions{.k = 1});
  std::vector<LogEntry> right, wrong;
  MeanBaseline fallback;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    LogEntry e;
    e.y = stream[i].y;
    e.warm_up = i < 20;
    e.interval = i == 0 ? fallback.predict_interval({}) : oracle.predict_interval(stream[i].x);
    right.push_back(e);
    oracle.learn_one(stream[i].x, stream[i].y);
    fallback.learn(stream[i].y);

    swapped.learn_one(stream[i].x, stream[i].y);
    e.interval = swapped.predict_interval(stream[i].x);
    wrong.push_back(e);
  }
  CHECK(mae(wrong) == 0.0);
  CHECK(mae(log.entries) > 0.5);
  for (std::size_t i = 0; i < stream.size(); ++i) CHECK(log.entries[i].interval.point == right[i].interval.point);
  CHECK(log.entries[0].abstained);
  CHECK_FALSE(log.entries[1].abstained);
}

TEST_CASE("out-of-order streams are rejected") {
  auto stream = noisy_stream(3, 10);
  std::swap(stream[3], stream[4]);
  MeanBaseline m;
  CHECK_THROWS_AS(progressive_validate(m, stream), std::invalid_argument);
  auto dup = noisy_stream(3, 10);
  dup[5].date = dup[4].date;
  CHECK_THROWS_AS(progressive_validate(m, dup), std::invalid_argument);
}

TEST_CASE("metrics ignore warm-up predictions") {
  auto stream = noisy_stream(4, 100);
  QknnModel model(2, QknnOptions{.k = 5});
  auto log = progressive_validate(model, stream);
  const auto before = compute_metrics(std::span<const PredictionLog>(&log, 1), 1.0);
  Rng rng(5);
  for (auto& e : log.entries) {
    if (!e.warm_up) continue;
    e.interval.point = rng.normal(0, 1000);
    e.interval.lower = e.interval.point - 1e6;
    e.interval.upper = e.interval.point + 1e6;
  }
  const auto after = compute_metrics(std::span<const PredictionLog>(&log, 1), 1.0);
  CHECK(to_json(after) == to_json(before));
  CHECK(before.count == 80);
}

TEST_CASE("pooled MAE is the count-weighted mean of per-vehicle MAEs") {
  std::vector<std::pair<std::string, std::vector<Observation>>> streams;
  for (std::uint64_t v = 0; v < 6; ++v) streams.emplace_back("V" + std::to_string(v), noisy_stream(10 + v, 30 + 15 * v));
  auto logs = evaluate_fleet(ModelSpec{"qknn", {{"k", 5}}, 1}, streams);
  auto report = build_report("qknn", Target::Distance, logs, 5.0);
  double weighted = 0.0;
  std::size_t total = 0;
  for (const auto& [id, m] : report.vehicles) {
    weighted += m.mae * static_cast<double>(m.count);
    total += m.count;
  }
  CHECK(total == report.aggregate.count);
  CHECK(report.aggregate.mae == doctest::Approx(weighted / static_cast<double>(total)));
  CHECK(report.over_time.back().mae == doctest::Approx(report.aggregate.mae));

  // Gaussian intervals: MPIW is 2 z times the mean sigma.
  double sigma_sum = 0.0;
  std::size_t n = 0;
  for (const auto& log : logs) {
    for (const auto& e : log.entries) {
      if (e.warm_up) continue;
      sigma_sum += *e.interval.sigma;
      ++n;
    }
  }
  CHECK(report.aggregate.mpiw == doctest::Approx(2 * z_for_confidence(0.9) * sigma_sum / static_cast<double>(n)));
}

TEST_CASE("wider gaussian intervals never lose coverage") {
  auto stream = noisy_stream(6, 200);
  QknnModel model(2, QknnOptions{.k = 10});
  auto log = progressive_validate(model, stream);
  const double z = z_for_confidence(0.9);
  double last_picp = picp(log.entries), last_mpiw = mpiw(log.entries);
  for (double factor : {1.1, 1.5, 2.0, 4.0}) {
    auto wider = log.entries;
    for (auto& e : wider) {
      const double s = *e.interval.sigma * factor;
      e.interval.lower = e.interval.point - z * s;
      e.interval.upper = e.interval.point + z * s;
    }
    CHECK(picp(wider) >= last_picp);
    CHECK(mpiw(wider) > last_mpiw);
    last_picp = picp(wider);
    last_mpiw = mpiw(wider);
  }
}

TEST_CASE("fleet evaluation is reproducible and reports round trip") {
  std::vector<std::pair<std::string, std::vector<Observation>>> streams;
  for (std::uint64_t v = 0; v < 3; ++v) streams.emplace_back("V" + std::to_string(v), noisy_stream(20 + v, 60));
  for (const auto& kind : model_kinds()) {
    ModelSpec spec{kind, nlohmann::json::object(), 9};
    auto a = build_report(kind, Target::Departure, evaluate_fleet(spec, streams), 1.0);
    auto b = build_report(kind, Target::Departure, evaluate_fleet(spec, streams), 1.0);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(to_json(report_from_json(to_json(a))) == to_json(a));
  }
  CHECK_THROWS_AS(report_from_json(nlohmann::json{{"model", 3}}), DataError);
}

TEST_CASE("csv and table output") {
  MetricsReport r;
  r.model = "qr";
  r.target = Target::Distance;
  r.threshold = 5.0;
  r.aggregate = Metrics{10, 1, 2.5, 12.0, 60.0, 0.9, 8.0};
  r.vehicles = {{"A", r.aggregate}};
  r.over_time = {{10, 2.5}};
  std::vector<MetricsReport> reports{r};
  std::ostringstream metrics, per_vehicle, curve;
  write_metrics_csv(metrics, reports);
  write_per_vehicle_csv(per_vehicle, reports);
  write_over_time_csv(curve, reports);
  CHECK(metrics.str().rfind("model,target,count,mae,mape,pct_within,picp,mpiw,abstentions\n", 0) == 0);
  CHECK(metrics.str().find("qr,distance,10,") != std::string::npos);
  CHECK(per_vehicle.str().find("qr,distance,A,10,") != std::string::npos);
  CHECK(curve.str().find("qr,distance,10,") != std::string::npos);
  CHECK(render_table(reports).find("qr") != std::string::npos);
  CHECK(parse_target("distance") == Target::Distance);
  CHECK_THROWS_AS(parse_target("speed"), std::invalid_argument);
}
