#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "firstdrive/features.hpp"
#include "firstdrive/rng.hpp"
#include "firstdrive/synthdata.hpp"
#include "helpers.hpp"

using namespace firstdrive;

TEST_CASE("cyclic encoding") {
  auto a = cyclic_encode(0, 24);
  CHECK(a.x == doctest::Approx(0.0));
  CHECK(a.y == doctest::Approx(1.0));
  auto b = cyclic_encode(6, 24);
  CHECK(b.x == doctest::Approx(1.0));
  CHECK(b.y == doctest::Approx(0.0).epsilon(1e-12));
  auto c = cyclic_encode(18, 24);
  CHECK(c.x == doctest::Approx(-1.0));
  CHECK(std::abs(c.y) < 1e-12);
  CHECK_THROWS_AS(cyclic_encode(1, 0), std::domain_error);
  CHECK_THROWS_AS(cyclic_encode(1, -3), std::domain_error);

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double max_f = rng.uniform(0.5, 60.0);
    const double f = rng.uniform(0.0, max_f);
    const auto p = cyclic_encode(f, max_f);
    const auto q = cyclic_encode(f + max_f, max_f);
    CHECK(p.x * p.x + p.y * p.y == doctest::Approx(1.0));
    CHECK(std::abs(p.x - q.x) < 1e-12);
    CHECK(std::abs(p.y - q.y) < 1e-12);
  }
}

TEST_CASE("calendar expansion") {
  auto monday = calendar_expand(parse_date("2021-03-01"), parse_timestamp("2021-02-28T07:45"));
  CHECK(monday.day_of_week == 0);
  CHECK(monday.is_workday);
  CHECK(monday.hour_of_day == 7);
  CHECK(monday.minute_of_hour == 45);
  CHECK(monday.part == PartOfDay::Morning);
  CHECK(monday.day_of_month == 1);

  auto saturday = calendar_expand(parse_date("2021-03-06"), parse_timestamp("2021-03-05T19:00"));
  CHECK(saturday.day_of_week == 5);
  CHECK_FALSE(saturday.is_workday);
  CHECK(saturday.part == PartOfDay::Evening);
}

TEST_CASE("part-of-day boundaries") {
  CHECK(part_of_day(0) == PartOfDay::Night);
  CHECK(part_of_day(5) == PartOfDay::Night);
  CHECK(part_of_day(6) == PartOfDay::Morning);
  CHECK(part_of_day(10) == PartOfDay::Morning);
  CHECK(part_of_day(11) == PartOfDay::Noon);
  CHECK(part_of_day(13) == PartOfDay::Afternoon);
  CHECK(part_of_day(17) == PartOfDay::Evening);
  CHECK(part_of_day(23) == PartOfDay::Evening);
}

TEST_CASE("one-hot encoding") {
  const auto& vocab = part_of_day_vocabulary();
  CHECK(one_hot("morning", vocab) == std::vector<double>{1, 0, 0, 0, 0});
  CHECK(one_hot("night", vocab) == std::vector<double>{0, 0, 0, 0, 1});
  CHECK_THROWS_AS(one_hot("brunch", vocab), std::invalid_argument);
}

TEST_CASE("target aggregates") {
  RunningStats empty(7);
  CHECK_FALSE(empty.historical_average().has_value());
  CHECK_FALSE(empty.running_average().has_value());

  RunningStats s(2);
  for (double y : {10.0, 20.0, 30.0}) s = update_target_aggregates(s, y);
  CHECK(*s.historical_average() == doctest::Approx(20.0));
  CHECK(*s.running_average() == doctest::Approx(25.0));

  // An unbounded window equals the historical average.
  RunningStats all(RunningStats::kUnbounded);
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    all.push(rng.normal(3, 2));
    CHECK(*all.running_average() == doctest::Approx(*all.historical_average()));
  }
}

TEST_CASE("online standardization") {
  std::vector<bool> pass{false, false, true};
  std::vector<RunningStats> fresh(3);
  CHECK(standardize_online(std::vector<double>{4, 5, 1}, fresh, pass) == std::vector<double>{0, 0, 1});

  // Prior values 8, 10, 12: mean 10, sample std 2.
  std::vector<RunningStats> stats(3);
  for (double v : {8.0, 10.0, 12.0}) stats[0].push(v);
  CHECK(stats[0].stddev() == doctest::Approx(2.0));
  for (double v : {3.0, 3.0, 3.0}) stats[1].push(v);
  auto out = standardize_online(std::vector<double>{14, 99, 0}, stats, pass);
  CHECK(out[0] == doctest::Approx(2.0));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);

  auto missing = standardize_online(std::vector<double>{std::numeric_limits<double>::quiet_NaN(), 3, 1}, stats, pass);
  CHECK(missing[0] == 0.0);

  auto clipped = standardize_online(std::vector<double>{1000, 3, 1}, stats, pass);
  CHECK(clipped[0] == kStandardizeClip);
}

TEST_CASE("schema shape and JSON round trip") {
  const auto schema = FeatureSchema::standard();
  std::size_t width = 0;
  for (const auto& d : schema.descriptors()) width += d.width();
  CHECK(schema.encoded_length() == width);
  CHECK(FeatureSchema::from_json(schema.to_json()) == schema);

  const std::vector<std::string> pick{"date.day_of_week.onehot", "prev_trip.distance"};
  auto cols = schema.columns_of(pick);
  CHECK(cols.size() == 8);
  CHECK(schema.subset(pick).encoded_length() == 8);
  CHECK_THROWS_AS(schema.columns_of(std::vector<std::string>{"nope"}), std::invalid_argument);
}

TEST_CASE("pipeline vectors never depend on the current or later days") {
  auto fleet = preprocess_fleet(generate_fleet(default_fleet_profiles(2, 1, 9), 100, 4).vehicles);
  for (const auto& v : fleet) {
    const auto ex = build_daily_examples(v);
    REQUIRE(ex.size() > 10);
    FeaturePipeline streaming;
    std::vector<EncodedVector> seen;
    for (const auto& e : ex) {
      seen.push_back(streaming.transform(e));
      streaming.update(e);
    }
    // Re-encode day t from a pipeline fed only days < t, then perturb day t's
    // own targets: the vector must not move.
    for (std::size_t t : {std::size_t{0}, std::size_t{5}, ex.size() - 1}) {
      FeaturePipeline prefix;
      for (std::size_t i = 0; i < t; ++i) prefix.update(ex[i]);
      DailyExample changed = ex[t];
      changed.target_departure = 23.0;
      changed.target_distance = 999.0;
      CHECK(prefix.transform(changed) == seen[t]);
      CHECK(seen[t].size() == FeatureSchema::standard().encoded_length());
      for (double x : seen[t]) CHECK(std::isfinite(x));
    }
    for (double x : seen.front())
      CHECK((x == 0.0 || x == 1.0));  // cold start: scaled dims 0, one-hot dims 0/1
  }
}
