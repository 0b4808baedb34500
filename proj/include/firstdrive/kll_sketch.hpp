#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace firstdrive {

// KLL quantile sketch (Karnin, Lang, Liberty). Level h holds items of weight
// 2^h; level capacities shrink geometrically (factor 2/3) with distance from
// the top level, so retained items stay O(k) while rank error is O(n/k).
//
// Compaction keeps the odd- or even-indexed items of a sorted level, chosen by
// a per-sketch splitmix64 stream so results are reproducible from the seed.
class KllSketch {
 public:
  static constexpr std::uint32_t kMinK = 8;
  static constexpr std::uint32_t kDefaultK = 200;

  explicit KllSketch(std::uint32_t k = kDefaultK, std::uint64_t seed = 0);

  // Throws std::invalid_argument for NaN or infinite values.
  void insert(double value);

  // Folds `other` into this sketch. Throws std::invalid_argument if k differs.
  void merge_from(const KllSketch& other);

  // Fresh sketch over the union of both inputs. The result's random stream is
  // a symmetric function of both input streams, so merge(a, b) and merge(b, a)
  // give identical answers.
  static KllSketch merge(const KllSketch& a, const KllSketch& b);

  // Smallest retained value whose weighted rank reaches q * n. q = 0 and q = 1
  // return the exact minimum and maximum inserted. Throws std::invalid_argument
  // for q outside [0, 1] and InsufficientHistory when empty.
  double quantile(double q) const;

  // Estimated fraction of inserted values <= value.
  double rank(double value) const;

  struct Moments {
    double mean = 0.0;
    double stddev = 0.0;
  };
  // Weighted mean and (n-1)-normalised std of the retained items. Throws
  // InsufficientHistory for n < 2.
  Moments moments() const;
  // Moments of the union of several sketches' retained items, as if merged
  // without compaction. Throws InsufficientHistory for fewer than two items in
  // total.
  static Moments pooled_moments(std::span<const KllSketch* const> sketches);

  std::uint64_t count() const { return n_; }
  bool empty() const { return n_ == 0; }
  std::uint32_t k() const { return k_; }
  std::size_t retained() const { return size_; }
  std::size_t num_levels() const { return levels_.size(); }
  const std::vector<std::vector<double>>& levels() const { return levels_; }

  nlohmann::json to_json() const;
  static KllSketch from_json(const nlohmann::json& j);

 private:
  std::uint32_t capacity(std::size_t level) const;
  void grow();
  void compress();
  bool next_bit();
  void recount();

  std::uint32_t k_;
  std::uint64_t n_ = 0;
  std::uint64_t rng_state_;
  std::vector<std::vector<double>> levels_;
  std::size_t size_ = 0;
  std::size_t max_size_ = 0;
  double min_ = 0.0;
  double max_ = 0.0;
};

}  // namespace firstdrive
