#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "firstdrive/adwin.hpp"
#include "firstdrive/errors.hpp"
#include "firstdrive/kll_sketch.hpp"
#include "firstdrive/rng.hpp"

using namespace firstdrive;

namespace {

// Exact fraction of values <= v in a sorted sample.
double exact_rank(const std::vector<double>& sorted, double v) {
  return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin()) /
         static_cast<double>(sorted.size());
}

}  // namespace

TEST_CASE("kll small inputs are exact") {
  KllSketch s(200, 1);
  for (int i = 1; i <= 10; ++i) s.insert(i);
  const double median = s.quantile(0.5);
  CHECK((median == 5.0 || median == 6.0));
  CHECK(s.retained() == 10);

  KllSketch three(200);
  for (double v : {1.0, 2.0, 3.0}) three.insert(v);
  CHECK(three.quantile(0.0) == 1.0);
  CHECK(three.quantile(1.0) == 3.0);

  KllSketch constant(64, 3);
  for (int i = 0; i < 1000; ++i) constant.insert(3.0);
  for (double q : {0.0, 0.1, 0.5, 0.99, 1.0}) CHECK(constant.quantile(q) == 3.0);
  CHECK(constant.moments().stddev == doctest::Approx(0.0));
}

TEST_CASE("kll errors") {
  KllSketch s;
  CHECK_THROWS_AS(s.quantile(0.5), InsufficientHistory);
  s.insert(1.0);
  CHECK_THROWS_AS(s.quantile(1.5), std::invalid_argument);
  CHECK_THROWS_AS(s.insert(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(s.insert(INFINITY), std::invalid_argument);
  CHECK_THROWS_AS(s.moments(), InsufficientHistory);
  KllSketch other(100);
  CHECK_THROWS_AS(s.merge_from(other), std::invalid_argument);
}

TEST_CASE("kll median of 1..100000 within 0.7% rank") {
  KllSketch s(200, 17);
  for (int i = 1; i <= 100000; ++i) s.insert(i);
  const double m = s.quantile(0.5);
  CHECK(std::abs(m - 50000.0) <= 0.007 * 100000);
}

TEST_CASE("kll rank error over seeded uniform trials") {
  // Reduced trial count here; the full 100-trial sweep runs in the acceptance binary.
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(99, seed));
    KllSketch s(200, seed);
    std::vector<double> xs(100000);
    for (auto& x : xs) {
      x = rng.uniform();
      s.insert(x);
    }
    std::sort(xs.begin(), xs.end());
    for (double q : {0.05, 0.5, 0.95}) worst = std::max(worst, std::abs(exact_rank(xs, s.quantile(q)) - q));
  }
  CHECK(worst <= 0.02);
}

TEST_CASE("kll merge") {
  KllSketch a(200, 1), b(200, 2), empty(200, 3);
  for (int i = 1; i <= 500; ++i) a.insert(i);
  for (int i = 501; i <= 1000; ++i) b.insert(i);

  auto ab = KllSketch::merge(a, b);
  auto ba = KllSketch::merge(b, a);
  CHECK(ab.count() == 1000);
  CHECK(std::abs(ab.quantile(0.5) - 500.0) <= 0.02 * 1000);
  for (double q : {0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0}) CHECK(ab.quantile(q) == ba.quantile(q));

  auto with_empty = KllSketch::merge(empty, a);
  for (double q : {0.0, 0.3, 0.5, 0.8, 1.0}) CHECK(with_empty.quantile(q) == a.quantile(q));

  // Answer-level associativity against the exact union.
  Rng rng(4);
  KllSketch x(100, 10), y(100, 11), z(100, 12);
  std::vector<double> all;
  for (int i = 0; i < 30000; ++i) {
    const double v = rng.normal();
    all.push_back(v);
    (i % 3 == 0 ? x : i % 3 == 1 ? y : z).insert(v);
  }
  std::sort(all.begin(), all.end());
  auto left = KllSketch::merge(KllSketch::merge(x, y), z);
  auto right = KllSketch::merge(x, KllSketch::merge(y, z));
  for (double q : {0.05, 0.5, 0.95}) {
    CHECK(std::abs(exact_rank(all, left.quantile(q)) - q) <= 0.03);
    CHECK(std::abs(exact_rank(all, right.quantile(q)) - q) <= 0.03);
  }
}

TEST_CASE("kll moments") {
  Rng rng(8);
  KllSketch s(200, 8);
  for (int i = 0; i < 10000; ++i) s.insert(rng.normal());
  auto m = s.moments();
  CHECK(std::abs(m.mean) < 0.05);
  CHECK(m.stddev == doctest::Approx(1.0).epsilon(0.05));

  KllSketch two(200, 9);
  for (int i = 0; i < 500; ++i) {
    two.insert(0.0);
    two.insert(10.0);
  }
  CHECK(two.moments().mean == doctest::Approx(5.0).epsilon(0.05));
  CHECK(two.moments().stddev == doctest::Approx(5.0).epsilon(0.05));
}

TEST_CASE("kll memory stays logarithmic") {
  KllSketch s(200, 1);
  for (int i = 0; i < 1000000; ++i) s.insert(i % 7919);
  const double bound = 3.0 * 200 * std::log2(1e6 / 200);
  CHECK(static_cast<double>(s.retained()) <= bound);
  CHECK(s.count() == 1000000);

  auto back = KllSketch::from_json(s.to_json());
  for (double q : {0.0, 0.5, 1.0}) CHECK(back.quantile(q) == s.quantile(q));
}

TEST_CASE("adwin constant stream never drifts") {
  Adwin w;
  for (int i = 0; i < 200; ++i) CHECK_FALSE(w.update(0.0));
  CHECK(w.width() == 200);
}

TEST_CASE("adwin catches a 0 to 1 step within 50 samples") {
  Adwin w(Adwin::Options{.delta = 0.002});
  for (int i = 0; i < 100; ++i) REQUIRE_FALSE(w.update(0.0));
  int detected_at = -1;
  for (int i = 0; i < 100; ++i) {
    if (w.update(1.0)) {
      detected_at = i;
      break;
    }
  }
  CHECK(detected_at >= 0);
  CHECK(detected_at < 50);
  CHECK(w.last_cut_increased());
}

TEST_CASE("adwin false drift rate on iid noise") {
  std::uint64_t detections = 0;
  const int runs = 20, samples = 10000;
  for (int r = 0; r < runs; ++r) {
    Rng rng(derive_seed(31, r));
    Adwin w;
    for (int i = 0; i < samples; ++i) w.update(rng.normal(0.0, 1.0));
    detections += w.detections();
  }
  const double rate = static_cast<double>(detections) / (runs * samples);
  MESSAGE("false detections per sample: " << rate);
  CHECK(rate < 0.01);
}

TEST_CASE("adwin window statistics match the retained values") {
  Rng rng(3);
  Adwin w;
  std::vector<double> values;
  for (int i = 0; i < 3000; ++i) {
    const double v = i < 1500 ? rng.normal(0, 1) : rng.normal(4, 1);
    values.push_back(v);
    w.update(v);
    const auto n = static_cast<std::size_t>(w.width());
    REQUIRE(n <= values.size());
    double sum = 0.0;
    for (std::size_t k = values.size() - n; k < values.size(); ++k) sum += values[k];
    CHECK(w.mean() == doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-9));
  }
  CHECK(w.detections() >= 1);
  CHECK(w.bucket_count() < 100);

  auto back = Adwin::from_json(w.to_json());
  CHECK(back.width() == w.width());
  CHECK(back.mean() == w.mean());
}

TEST_CASE("pooled moments equal the moments of the concatenated values") {
  // Below capacity nothing is compacted, so the pooled moments must be the
  // exact sample mean and (n-1) std of everything inserted.
  Rng rng(12);
  std::vector<double> all;
  std::vector<KllSketch> parts;
  for (int p = 0; p < 4; ++p) {
    parts.emplace_back(200, p);
    for (int i = 0; i < 30 + 10 * p; ++i) {
      const double v = rng.normal(p, 1.0 + p);
      parts.back().insert(v);
      all.push_back(v);
    }
  }
  double mean = 0.0;
  for (double v : all) mean += v;
  mean /= static_cast<double>(all.size());
  double ss = 0.0;
  for (double v : all) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(all.size() - 1));

  std::vector<const KllSketch*> ptrs;
  for (const auto& s : parts) ptrs.push_back(&s);
  const auto pooled = KllSketch::pooled_moments(ptrs);
  CHECK(pooled.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(pooled.stddev == doctest::Approx(sd).epsilon(1e-12));

  const KllSketch* one = &parts[2];
  CHECK(KllSketch::pooled_moments(std::span(&one, 1)).stddev == doctest::Approx(parts[2].moments().stddev));

  KllSketch lone(200, 0);
  lone.insert(1.0);
  const KllSketch* lone_ptr = &lone;
  CHECK_THROWS_AS(KllSketch::pooled_moments(std::span(&lone_ptr, 1)), InsufficientHistory);
}
