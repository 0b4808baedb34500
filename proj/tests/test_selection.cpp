#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "firstdrive/rng.hpp"
#include "firstdrive/selection.hpp"

using namespace firstdrive;

namespace {

std::vector<std::string> numeric_names(std::size_t n) {
  std::vector<std::string> out;
  const auto schema = FeatureSchema::standard();
  for (const auto& d : schema.descriptors()) {
    if (d.kind == FeatureKind::Numeric && out.size() < n) out.push_back(d.name);
  }
  return out;
}

std::vector<std::array<double, 2>> uniform_points(Rng& rng, std::size_t n) {
  std::vector<std::array<double, 2>> p(n);
  for (auto& v : p) v = {rng.uniform(), rng.uniform()};
  return p;
}

// R^2 of column j regressed on the others plus an intercept, via the normal
// equations solved with a Cholesky factorization.
double r_squared_oracle(const Eigen::MatrixXd& x, Eigen::Index j) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Eigen::MatrixXd a(n, p);
  a.col(0).setOnes();
  for (Eigen::Index c = 0, k = 1; c < p; ++c) {
    if (c != j) a.col(k++) = x.col(c);
  }
  const Eigen::VectorXd y = x.col(j);
  const Eigen::VectorXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
  const double ss_res = (y - a * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  return 1.0 - ss_res / ss_tot;
}

using Streams = std::vector<std::pair<std::string, std::vector<Observation>>>;

// Columns: informative features first, then optional pure-noise ones.
Streams planted_streams(std::uint64_t seed, std::size_t informative, std::size_t noise, std::size_t vehicles,
                        std::size_t days, double noise_sd) {
  Rng rng(seed);
  Streams out;
  const Date start = parse_date("2021-01-04");
  for (std::size_t v = 0; v < vehicles; ++v) {
    std::vector<Observation> s;
    for (std::size_t t = 0; t < days; ++t) {
      Observation o{start + std::chrono::days(t), EncodedVector(informative + noise), 0.0};
      for (auto& x : o.x) x = rng.normal();
      for (std::size_t j = 0; j < informative; ++j) o.y += 2.0 * o.x[j];
      o.y += rng.normal(0, noise_sd);
      s.push_back(o);
    }
    out.emplace_back("V" + std::to_string(v), std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("hopkins on uniform data stays near one half") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(40, seed));
    const auto pts = uniform_points(rng, 1000);
    const auto h = hopkins_statistic(pts, 100, seed);
    CHECK(h.m == 100);
    CHECK_MESSAGE(h.statistic >= 0.45, "seed " << seed);
    CHECK_MESSAGE(h.statistic <= 0.58, "seed " << seed);
  }
}

TEST_CASE("hopkins on tight blobs approaches one") {
  Rng rng(41);
  std::vector<std::array<double, 2>> pts;
  for (int i = 0; i < 500; ++i) {
    pts.push_back({rng.normal(0.2, 1e-3), rng.normal(0.2, 1e-3)});
    pts.push_back({rng.normal(0.8, 1e-3), rng.normal(0.8, 1e-3)});
  }
  CHECK(hopkins_statistic(pts, 100, 1).statistic > 0.95);

  std::vector<std::array<double, 2>> same(10, {3.0, 4.0});
  CHECK(hopkins_statistic(same, 2, 1).statistic == 1.0);
}

TEST_CASE("hopkins preconditions and scale invariance") {
  Rng rng(42);
  const auto pts = uniform_points(rng, 10);
  CHECK_THROWS_AS(hopkins_statistic(pts, 6, 1), std::invalid_argument);
  CHECK_THROWS_AS(hopkins_statistic(pts, 0, 1), std::invalid_argument);
  CHECK_NOTHROW(hopkins_statistic(pts, 5, 1));
  CHECK(default_hopkins_m(50) == 5);
  CHECK(default_hopkins_m(5000) == 100);
  CHECK(default_hopkins_m(3) == 1);

  auto raw = uniform_points(rng, 300);
  for (std::size_t i = 0; i < 100; ++i) raw[i] = {0.1 + 0.01 * rng.normal(), 0.9 + 0.01 * rng.normal()};
  auto scaled = raw;
  for (auto& p : scaled) p = {24.0 * p[0] - 3.0, 80.0 * p[1] + 7.0};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(hopkins_statistic(scaled, 30, seed).statistic ==
          doctest::Approx(hopkins_statistic(raw, 30, seed).statistic).epsilon(1e-9));
  }
}

TEST_CASE("well-behaving selection ranks, splits and is deterministic") {
  Rng rng(43);
  std::vector<VehicleTargets> fleet;
  for (int v = 0; v < 10; ++v) {
    VehicleTargets t{"V" + std::to_string(v), {}};
    for (int i = 0; i < 100; ++i) {
      if (v < 5) {
        t.points.push_back({7.0 + 0.05 * rng.normal() + (i % 2) * 10, 20 + 0.1 * rng.normal()});
      } else {
        t.points.push_back({rng.uniform(0, 24), rng.uniform(0, 100)});
      }
    }
    fleet.push_back(t);
  }
  fleet.push_back(VehicleTargets{"lonely", {{8.0, 10.0}}});

  auto all = select_well_behaving(fleet, fleet.size(), 0.8, 7);
  CHECK(all.selected.size() == fleet.size());
  CHECK(all.tuning.size() == 9);  // llround(0.8 * 11)
  CHECK(all.test.size() == 2);
  CHECK_FALSE(all.fleet_smaller_than_request);
  CHECK(all.ranking.back().first == "lonely");
  CHECK(all.ranking.back().second == 0.0);
  for (std::size_t i = 1; i < all.ranking.size(); ++i) CHECK(all.ranking[i - 1].second >= all.ranking[i].second);

  auto top = select_well_behaving(fleet, 5, 0.8, 7);
  auto sorted = top.selected;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::string>{"V0", "V1", "V2", "V3", "V4"});

  auto again = select_well_behaving(fleet, 5, 0.8, 7);
  CHECK(again.tuning == top.tuning);
  CHECK(again.test == top.test);
  CHECK(again.ranking == top.ranking);

  CHECK(select_well_behaving(fleet, 50, 0.8, 7).fleet_smaller_than_request);
}

TEST_CASE("pearson examples and a two-pass oracle") {
  std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(pearson(x, x) == doctest::Approx(1.0));
  std::vector<double> neg{10, 8, 6, 4, 2};
  CHECK(pearson(x, neg) == doctest::Approx(-1.0));
  CHECK(pearson(x, std::vector<double>(5, 3.0)) == 0.0);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), std::invalid_argument);

  Rng rng(44);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(200), b(200);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.normal(1e3, 5);
      b[i] = 0.3 * a[i] + rng.normal();
    }
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= 200;
    mb /= 200;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sab += (a[i] - ma) * (b[i] - mb);
      saa += (a[i] - ma) * (a[i] - ma);
      sbb += (b[i] - mb) * (b[i] - mb);
    }
    CHECK(std::abs(pearson(a, b) - sab / std::sqrt(saa * sbb)) <= 1e-8);
  }
}

TEST_CASE("pearson screen averages per vehicle") {
  const auto schema = FeatureSchema::standard();
  const std::string signal = "prev_trip.distance", constant = "prev_trip.duration";
  const auto signal_col = schema.columns_of(std::vector{signal}).at(0);
  const auto constant_col = schema.columns_of(std::vector{constant}).at(0);
  Rng rng(45);
  std::vector<VehicleMatrix> vehicles;
  for (int v = 0; v < 50; ++v) {
    VehicleMatrix m{"V" + std::to_string(v), Eigen::MatrixXd(100, schema.encoded_length()), Eigen::VectorXd(100)};
    for (Eigen::Index r = 0; r < 100; ++r) {
      for (Eigen::Index c = 0; c < m.x.cols(); ++c) m.x(r, c) = rng.normal();
      m.y(r) = rng.normal(10, 3);
      m.x(r, static_cast<Eigen::Index>(signal_col)) = m.y(r);
      m.x(r, static_cast<Eigen::Index>(constant_col)) = 3.0;
    }
    vehicles.push_back(std::move(m));
  }
  const auto screen = pearson_screen(vehicles, schema, 0.02);
  REQUIRE(screen.column_r.size() == schema.encoded_length());
  CHECK(screen.column_r[signal_col] == doctest::Approx(1.0));
  CHECK(screen.column_r[constant_col] == 0.0);
  for (std::size_t c = 0; c < screen.column_r.size(); ++c) {
    if (c != signal_col) CHECK(std::abs(screen.column_r[c]) < 0.05);
  }
  CHECK(std::find(screen.flagged.begin(), screen.flagged.end(), constant) != screen.flagged.end());
  CHECK(std::find(screen.flagged.begin(), screen.flagged.end(), signal) == screen.flagged.end());
  CHECK(screen.descriptor_r.size() == schema.size());
}

TEST_CASE("forward selection picks the exact copy of the target first") {
  const auto names = numeric_names(10);
  const auto schema = FeatureSchema::standard().subset(names);
  REQUIRE(schema.encoded_length() == 10);
  Rng rng(46);
  std::vector<VehicleMatrix> vehicles;
  for (int v = 0; v < 5; ++v) {
    VehicleMatrix m{"V" + std::to_string(v), Eigen::MatrixXd(80, 10), Eigen::VectorXd(80)};
    for (Eigen::Index r = 0; r < 80; ++r) {
      for (Eigen::Index c = 0; c < 10; ++c) m.x(r, c) = rng.normal();
      m.x(r, 4) = 0.7 * m.x(r, 3) + 0.7 * rng.normal();  // correlated but not exact
      m.y(r) = m.x(r, 3);
    }
    vehicles.push_back(std::move(m));
  }
  const auto score = batch_least_squares_scorer(vehicles, schema);

  std::size_t oracle = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < names.size(); ++j) {
    const double s = score({names[j]});
    if (s < best) {
      best = s;
      oracle = j;
    }
  }
  CHECK(oracle == 3);
  const auto picked = forward_sfs(names, score, 3);
  REQUIRE(picked.steps.size() == 3);
  CHECK(picked.steps[0].first == names[oracle]);
  CHECK(picked.steps[0].second == doctest::Approx(best));
  CHECK(picked.names.size() == 3);
  CHECK(forward_sfs(names, score, 0).names.empty());
}

TEST_CASE("forward selection prefers new information over a duplicate") {
  const auto names = numeric_names(4);
  const auto schema = FeatureSchema::standard().subset(names);
  Rng rng(47);
  std::vector<VehicleMatrix> vehicles;
  for (int v = 0; v < 5; ++v) {
    VehicleMatrix m{"V" + std::to_string(v), Eigen::MatrixXd(80, 4), Eigen::VectorXd(80)};
    for (Eigen::Index r = 0; r < 80; ++r) {
      m.x(r, 0) = rng.normal();
      m.x(r, 1) = m.x(r, 0);  // duplicate of column 0
      m.x(r, 2) = rng.normal();
      m.x(r, 3) = rng.normal();
      m.y(r) = 3 * m.x(r, 0) + m.x(r, 2) + m.x(r, 3) + 0.1 * rng.normal();
    }
    vehicles.push_back(std::move(m));
  }
  const auto picked = forward_sfs(names, batch_least_squares_scorer(vehicles, schema), 4);
  REQUIRE(picked.steps.size() == 4);
  CHECK(picked.steps[0].first == names[0]);
  CHECK(picked.steps[3].first == names[1]);
}

TEST_CASE("vif examples") {
  Eigen::MatrixXd orth(8, 2);
  orth << 1, 1, -1, 1, 1, -1, -1, -1, 1, 1, -1, 1, 1, -1, -1, -1;
  auto v = vif_scores(orth);
  CHECK(v[0] == doctest::Approx(1.0));
  CHECK(v[1] == doctest::Approx(1.0));
  CHECK(vif_prune(orth, {"a", "b"}).dropped.empty());

  Rng rng(48);
  Eigen::MatrixXd dup(200, 3);
  for (Eigen::Index r = 0; r < 200; ++r) {
    dup(r, 0) = rng.normal();
    dup(r, 1) = 2 * dup(r, 0);
    dup(r, 2) = rng.normal();
  }
  auto dv = vif_scores(dup);
  CHECK(std::isinf(dv[0]));
  CHECK(std::isinf(dv[1]));
  auto pruned = vif_prune(dup, {"f1", "f2", "f3"});
  CHECK(pruned.dropped == std::vector<std::string>{"f1"});
  for (const auto& [name, score] : pruned.final_vif) CHECK(score < 10);

  Eigen::MatrixXd near(300, 3);
  for (Eigen::Index r = 0; r < 300; ++r) {
    near(r, 0) = rng.normal();
    near(r, 1) = rng.normal();
    near(r, 2) = near(r, 0) + near(r, 1) + 0.01 * rng.normal();
  }
  auto np = vif_prune(near, {"f1", "f2", "f3"});
  CHECK(np.dropped.size() == 1);
  CHECK(np.retained.size() == 2);
  for (const auto& [name, score] : np.final_vif) CHECK(score < 10);

  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(10, 2);
  constant.col(1) = Eigen::VectorXd::LinSpaced(10, 0, 1);
  CHECK(std::isinf(vif_scores(constant)[0]));
}

TEST_CASE("vif agrees with a normal-equations oracle") {
  Rng rng(49);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(rng.below(5));
    Eigen::MatrixXd x(150, p);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < p; ++c) x(r, c) = rng.normal() + (c > 0 ? 0.6 * x(r, c - 1) : 0.0);
    }
    const auto v = vif_scores(x);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double oracle = 1.0 / (1.0 - r_squared_oracle(x, j));
      CHECK(std::abs(v[static_cast<std::size_t>(j)] - oracle) <= 1e-8 * std::max(1.0, oracle));
    }
  }
}

TEST_CASE("vif pruning drops grouped columns together") {
  Rng rng(50);
  Eigen::MatrixXd x(200, 4);
  for (Eigen::Index r = 0; r < 200; ++r) {
    x(r, 0) = rng.normal();
    x(r, 1) = rng.normal();
    x(r, 2) = x(r, 0) + 0.001 * rng.normal();  // second column of group "pair"
    x(r, 3) = rng.normal();
  }
  auto res = vif_prune(x, {"single", "pair", "other"}, {{0}, {1, 2}, {3}});
  REQUIRE(res.dropped.size() == 1);
  CHECK(res.dropped[0] == "single");
  CHECK(res.retained == std::vector<std::string>{"pair", "other"});
}

TEST_CASE("removal rule") {
  const std::vector<std::string> all{"a", "b", "c", "d"};
  const std::vector<std::string> flagged{"a", "b"};
  const std::vector<std::vector<std::string>> favored{{"b", "c"}, {"c"}};
  CHECK(removal_set(all, flagged, favored) == std::vector<std::string>{"a"});
  CHECK(removal_set(all, flagged, favored, true) == std::vector<std::string>{"a", "b", "d"});
}

TEST_CASE("backward selection removes planted noise first") {
  const auto names = numeric_names(4);
  const auto schema = FeatureSchema::standard().subset(names);
  int noise_first = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto streams = planted_streams(derive_seed(51, seed), 3, 1, 5, 150, 0.5);
    const auto score = progressive_scorer(ModelSpec{"qknn", {{"k", 10}}, seed}, streams, schema);
    const auto result = backward_sfs(names, score);
    if (!result.steps.empty() && result.steps.front().first == names[3]) ++noise_first;
    for (std::size_t i = 1; i < result.steps.size(); ++i) CHECK(result.steps[i].second <= result.steps[i - 1].second);
  }
  CHECK(noise_first >= 16);
}

TEST_CASE("backward selection keeps a fully informative set") {
  const auto names = numeric_names(3);
  const auto schema = FeatureSchema::standard().subset(names);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto streams = planted_streams(derive_seed(52, seed), 3, 0, 4, 150, 0.3);
    const auto result = backward_sfs(names, progressive_scorer(ModelSpec{"qr", {{"eta", 0.03}}, seed}, streams, schema));
    CHECK(result.names == names);
    CHECK(result.steps.empty());
  }

  int calls = 0;
  const auto single = backward_sfs({"only"}, [&](const std::vector<std::string>&) {
    ++calls;
    return 1.0;
  });
  CHECK(single.names == std::vector<std::string>{"only"});
  CHECK(calls <= 1);
}

TEST_CASE("grid expansion and search") {
  auto grid = expand_grid({{"b", {1, 2}}, {"a", {"x", "y", "z"}}});
  REQUIRE(grid.size() == 6);
  CHECK(grid[0] == nlohmann::json{{"a", "x"}, {"b", 1}});
  CHECK(grid[1] == nlohmann::json{{"a", "x"}, {"b", 2}});
  CHECK(grid[5] == nlohmann::json{{"a", "z"}, {"b", 2}});

  auto one = grid_search({nlohmann::json{{"k", 3}}}, [](const nlohmann::json&) { return 7.0; });
  CHECK(one.best == nlohmann::json{{"k", 3}});
  CHECK(one.best_mae == 7.0);
  CHECK_THROWS_AS(grid_search({}, [](const nlohmann::json&) { return 0.0; }), std::invalid_argument);

  auto score = [](const nlohmann::json& c) { return std::abs(c.at("k").get<double>() - 2.0); };
  std::vector<nlohmann::json> plain{{{"k", 1}}, {{"k", 2}}, {{"k", 3}}};
  std::vector<nlohmann::json> dup{{{"k", 1}}, {{"k", 2}}, {{"k", 2}}, {{"k", 3}}, {{"k", 1}}};
  CHECK(grid_search(dup, score).best == grid_search(plain, score).best);

  // Ties keep the earliest combination.
  auto tie = grid_search(plain, [](const nlohmann::json&) { return 5.0; });
  CHECK(tie.best == nlohmann::json{{"k", 1}});
}

TEST_CASE("grid search never picks a divergent learning rate") {
  const auto names = numeric_names(3);
  const auto schema = FeatureSchema::standard().subset(names);
  const auto streams = planted_streams(53, 3, 0, 4, 120, 0.5);
  auto grid = expand_grid({{"eta", {1e-4, 1e-2, 10.0}}, {"scale_target", {false}}});
  auto result = grid_search(grid, [&](const nlohmann::json& params) {
    return progressive_scorer(ModelSpec{"qr", params, 1}, streams, schema)(names);
  });
  CHECK(result.best.at("eta").get<double>() != 10.0);
  CHECK(result.evaluated.size() == 3);
  CHECK(result.evaluated[2].second > result.best_mae);
}
