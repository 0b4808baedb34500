#include <doctest.h>

#include <cmath>
#include <sstream>

#include "firstdrive/data_model.hpp"
#include "firstdrive/errors.hpp"
#include "firstdrive/synthdata.hpp"
#include "helpers.hpp"

using namespace firstdrive;
using testutil::charge;
using testutil::trip;

TEST_CASE("short sessions are dropped, the 50 s boundary is kept") {
  CHECK(filter_short_sessions(std::vector{trip("2021-03-01T07:00:00", "2021-03-01T07:00:40")}).empty());
  CHECK(filter_short_sessions(std::vector{trip("2021-03-01T07:00:00", "2021-03-01T07:00:50")}).size() == 1);

  std::vector mixed{trip("2021-03-01T07:00:00", "2021-03-01T07:00:30"),
                    trip("2021-03-01T08:00:00", "2021-03-01T08:05:00"),
                    trip("2021-03-01T09:00:00", "2021-03-01T09:00:49")};
  auto kept = filter_short_sessions(mixed);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].duration_seconds() == 300);
  CHECK(filter_short_sessions(std::vector<TripSession>{}).empty());
}

TEST_CASE("drives closer than 15 minutes merge") {
  auto merged = merge_adjacent_sessions(std::vector{trip("2021-03-01T07:00", "2021-03-01T07:20", 5.0),
                                                    trip("2021-03-01T07:30", "2021-03-01T07:50", 7.0)});
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].distance_km == doctest::Approx(12.0));
  CHECK(merged[0].start == parse_timestamp("2021-03-01T07:00"));
  CHECK(merged[0].end == parse_timestamp("2021-03-01T07:50"));

  auto apart = merge_adjacent_sessions(std::vector{trip("2021-03-01T07:00", "2021-03-01T07:20"),
                                                   trip("2021-03-01T07:35", "2021-03-01T07:50")});
  CHECK(apart.size() == 2);
}

TEST_CASE("transitive merge equals pairwise merging to a fixpoint") {
  std::vector<TripSession> runs{trip("2021-03-01T07:00", "2021-03-01T07:10", 1.0),
                                trip("2021-03-01T07:15", "2021-03-01T07:25", 2.0),
                                trip("2021-03-01T07:30", "2021-03-01T07:40", 3.0),
                                trip("2021-03-01T09:00", "2021-03-01T09:10", 4.0)};
  // Oracle: merge the first adjacent pair under the gap until nothing changes.
  std::vector<TripSession> oracle = runs;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i + 1 < oracle.size(); ++i) {
      if (seconds_between(oracle[i].end, oracle[i + 1].start) < 15 * 60) {
        oracle[i].end = oracle[i + 1].end;
        oracle[i].distance_km += oracle[i + 1].distance_km;
        oracle.erase(oracle.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        changed = true;
        break;
      }
    }
  }
  auto merged = merge_adjacent_sessions(runs);
  REQUIRE(merged.size() == oracle.size());
  for (std::size_t i = 0; i < merged.size(); ++i) {
    CHECK(merged[i].start == oracle[i].start);
    CHECK(merged[i].end == oracle[i].end);
    CHECK(merged[i].distance_km == doctest::Approx(oracle[i].distance_km));
  }
  CHECK(merged.size() == 2);
}

TEST_CASE("overlapping sessions are corrupt input") {
  CHECK_THROWS_AS(merge_adjacent_sessions(std::vector{trip("2021-03-01T07:00", "2021-03-01T07:30"),
                                                      trip("2021-03-01T07:20", "2021-03-01T07:40")}),
                  DataError);
}

TEST_CASE("merged signal statistics pool moments by duration") {
  auto a = trip("2021-03-01T07:00", "2021-03-01T07:10");  // 600 s
  auto b = trip("2021-03-01T07:12", "2021-03-01T07:42");  // 1800 s
  a.signal(Signal::Speed) = {30.0, 4.0, 10.0, 50.0};
  b.signal(Signal::Speed) = {60.0, 6.0, 20.0, 90.0};
  auto m = merge_adjacent_sessions(std::vector{a, b});
  REQUIRE(m.size() == 1);
  const auto& s = m[0].signal(Signal::Speed);
  const double wa = 600, wb = 1800;
  const double mean = (wa * 30 + wb * 60) / (wa + wb);
  const double second = (wa * (16 + 900) + wb * (36 + 3600)) / (wa + wb);
  CHECK(*s.mean == doctest::Approx(mean));
  CHECK(*s.std == doctest::Approx(std::sqrt(second - mean * mean)));
  CHECK(*s.min == 10.0);
  CHECK(*s.max == 90.0);
}

TEST_CASE("sparse vehicles are removed below 50 drives") {
  auto vehicle = [](std::size_t drives) {
    VehicleHistory v;
    v.vehicle_id = "V" + std::to_string(drives);
    for (std::size_t i = 0; i < drives; ++i) {
      TripSession t = trip("2021-01-01T08:00", "2021-01-01T08:30");
      t.start += std::chrono::days(i);
      t.end += std::chrono::days(i);
      v.trips.push_back(t);
    }
    return v;
  };
  auto kept = filter_sparse_vehicles({vehicle(49), vehicle(50)});
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].vehicle_id == "V50");
  CHECK(filter_sparse_vehicles({}).empty());
}

TEST_CASE("daily examples come from the first drive of each day") {
  VehicleHistory v;
  v.vehicle_id = "V";
  v.trips = {trip("2021-03-01T07:30", "2021-03-01T08:00", 12.4), trip("2021-03-01T17:00", "2021-03-01T17:30", 12.0),
             trip("2021-03-03T08:15", "2021-03-03T08:45", 20.0)};
  v.charges = {charge("2021-03-01T18:00", "2021-03-01T22:00", 40.0)};
  auto ex = build_daily_examples(v);
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].date == parse_date("2021-03-01"));
  CHECK(ex[0].target_departure == doctest::Approx(7.5));
  CHECK(ex[0].target_distance == doctest::Approx(12.4));
  CHECK_FALSE(ex[0].features.previous_trip.has_value());
  CHECK_FALSE(ex[0].features.last_charge.has_value());

  CHECK(ex[1].date == parse_date("2021-03-03"));
  REQUIRE(ex[1].features.previous_trip.has_value());
  CHECK(ex[1].features.previous_trip->start == parse_timestamp("2021-03-01T17:00"));
  REQUIRE(ex[1].features.last_charge.has_value());
  CHECK(*ex[1].features.last_charge->soc_initial == 40.0);
}

TEST_CASE("a vehicle with one drive gets one example with missing history") {
  VehicleHistory v;
  v.vehicle_id = "V";
  v.trips = {trip("2021-03-02T09:00", "2021-03-02T09:20", 3.0)};
  auto ex = build_daily_examples(v);
  REQUIRE(ex.size() == 1);
  CHECK_FALSE(ex[0].features.previous_trip.has_value());
}

TEST_CASE("preprocessing properties on a generated fleet") {
  auto profiles = default_fleet_profiles(6, 2, 3);
  auto fleet = generate_fleet(profiles, 120, 11).vehicles;

  auto once = preprocess_fleet(fleet);
  auto twice = preprocess_fleet(once);
  CHECK(once == twice);

  for (const auto& v : fleet) {
    double before = 0.0, after = 0.0;
    auto filtered = filter_short_sessions(v.trips);
    for (const auto& t : filtered) before += t.distance_km;
    for (const auto& t : merge_adjacent_sessions(filtered)) after += t.distance_km;
    CHECK(after == doctest::Approx(before));
  }

  for (const auto& v : once) {
    auto ex = build_daily_examples(v);
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const Timestamp midnight = midnight_of(ex[i].date);
      if (ex[i].features.previous_trip) CHECK(ex[i].features.previous_trip->end < midnight);
      if (ex[i].features.last_charge) CHECK(ex[i].features.last_charge->start < midnight);
      if (i > 0) CHECK(ex[i - 1].date < ex[i].date);
      CHECK(ex[i].target_departure >= 0.0);
      CHECK(ex[i].target_departure < 24.0);
    }
  }
}

TEST_CASE("session and example CSV round trips") {
  auto fleet = preprocess_fleet(generate_fleet(default_fleet_profiles(3, 1, 5), 90, 2).vehicles);
  std::stringstream csv;
  write_sessions_csv(csv, fleet);
  auto back = read_sessions_csv(csv);
  CHECK(back == fleet);

  auto ex = build_daily_examples(fleet.at(0));
  std::stringstream daily;
  write_daily_examples_csv(daily, ex);
  auto ex2 = read_daily_examples_csv(daily);
  REQUIRE(ex2.size() == ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    CHECK(ex2[i].date == ex[i].date);
    CHECK(ex2[i].target_departure == ex[i].target_departure);
    CHECK(ex2[i].target_distance == ex[i].target_distance);
    CHECK(ex2[i].features.previous_trip == ex[i].features.previous_trip);
    CHECK(ex2[i].features.last_charge == ex[i].features.last_charge);
  }

  std::stringstream bad("vehicle_id,kind\nV,drive\n");
  CHECK_THROWS_AS(read_sessions_csv(bad), DataError);
}
