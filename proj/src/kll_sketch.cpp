#include "firstdrive/kll_sketch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "firstdrive/errors.hpp"
#include "firstdrive/rng.hpp"

namespace firstdrive {
namespace {

constexpr double kCapacityDecay = 2.0 / 3.0;

std::vector<std::pair<double, std::uint64_t>> weighted_items(const std::vector<std::vector<double>>& levels) {
  std::vector<std::pair<double, std::uint64_t>> items;
  std::uint64_t weight = 1;
  for (const auto& level : levels) {
    for (double v : level) items.emplace_back(v, weight);
    weight <<= 1;
  }
  std::sort(items.begin(), items.end());
  return items;
}

}  // namespace

KllSketch::KllSketch(std::uint32_t k, std::uint64_t seed) : k_(k), rng_state_(mix_seed(seed)) {
  if (k < kMinK) throw std::invalid_argument("KllSketch: k must be at least 8");
  grow();
}

std::uint32_t KllSketch::capacity(std::size_t level) const {
  const std::size_t depth = levels_.size() - level - 1;
  const double cap = std::ceil(static_cast<double>(k_) * std::pow(kCapacityDecay, static_cast<double>(depth)));
  return std::max<std::uint32_t>(2, static_cast<std::uint32_t>(cap));
}

void KllSketch::grow() {
  levels_.emplace_back();
  max_size_ = 0;
  for (std::size_t h = 0; h < levels_.size(); ++h) max_size_ += capacity(h);
}

bool KllSketch::next_bit() {
  rng_state_ += 0x9e3779b97f4a7c15ULL;
  return (mix_seed(rng_state_) >> 63) != 0;
}

void KllSketch::recount() {
  size_ = 0;
  for (const auto& level : levels_) size_ += level.size();
}

void KllSketch::compress() {
  for (std::size_t h = 0; h < levels_.size(); ++h) {
    if (levels_[h].size() < capacity(h)) continue;
    if (h + 1 >= levels_.size()) grow();
    auto& level = levels_[h];
    std::sort(level.begin(), level.end());
    // An odd item out (the smallest) stays behind; pairs above it promote one
    // member each, conserving total weight.
    const std::size_t first = level.size() % 2;
    const std::size_t offset = next_bit() ? 1 : 0;
    auto& up = levels_[h + 1];
    for (std::size_t i = first + offset; i < level.size(); i += 2) up.push_back(level[i]);
    level.resize(first);
    recount();
    return;
  }
}

void KllSketch::insert(double value) {
  if (!std::isfinite(value)) throw std::invalid_argument("KllSketch: value must be finite");
  if (n_ == 0) {
    min_ = max_ = value;
  } else {
    min_ = std::min(min_, value);
    max_ = std::max(max_, value);
  }
  ++n_;
  levels_[0].push_back(value);
  ++size_;
  if (size_ >= max_size_) compress();
}

void KllSketch::merge_from(const KllSketch& other) {
  if (other.k_ != k_) throw std::invalid_argument("KllSketch: cannot merge sketches with different k");
  if (other.n_ == 0) return;
  if (n_ == 0) {
    min_ = other.min_;
    max_ = other.max_;
  } else {
    min_ = std::min(min_, other.min_);
    max_ = std::max(max_, other.max_);
  }
  while (levels_.size() < other.levels_.size()) grow();
  for (std::size_t h = 0; h < other.levels_.size(); ++h) {
    levels_[h].insert(levels_[h].end(), other.levels_[h].begin(), other.levels_[h].end());
  }
  n_ += other.n_;
  recount();
  while (size_ >= max_size_) compress();
}

KllSketch KllSketch::merge(const KllSketch& a, const KllSketch& b) {
  if (a.k_ != b.k_) throw std::invalid_argument("KllSketch: cannot merge sketches with different k");
  KllSketch out(a.k_);
  out.rng_state_ = mix_seed(a.rng_state_ + b.rng_state_);
  out.merge_from(a);
  out.merge_from(b);
  return out;
}

double KllSketch::quantile(double q) const {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("KllSketch: quantile must lie in [0, 1]");
  if (n_ == 0) throw InsufficientHistory("KllSketch: quantile of an empty sketch");
  if (q == 0.0) return min_;
  if (q == 1.0) return max_;
  const auto items = weighted_items(levels_);
  const double target = q * static_cast<double>(n_);
  std::uint64_t cumulative = 0;
  for (const auto& [v, w] : items) {
    cumulative += w;
    if (static_cast<double>(cumulative) >= target) return v;
  }
  return items.back().first;
}

double KllSketch::rank(double value) const {
  if (n_ == 0) throw InsufficientHistory("KllSketch: rank of an empty sketch");
  std::uint64_t below = 0;
  std::uint64_t weight = 1;
  for (const auto& level : levels_) {
    for (double v : level) {
      if (v <= value) below += weight;
    }
    weight <<= 1;
  }
  return static_cast<double>(below) / static_cast<double>(n_);
}

KllSketch::Moments KllSketch::moments() const {
  const KllSketch* self = this;
  return pooled_moments(std::span(&self, 1));
}

KllSketch::Moments KllSketch::pooled_moments(std::span<const KllSketch* const> sketches) {
  std::uint64_t n = 0;
  for (const auto* s : sketches) n += s->n_;
  if (n < 2) throw InsufficientHistory("KllSketch: moments need at least two items");
  double total_weight = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  // Weighted Welford (West's update).
  for (const auto* s : sketches) {
    double weight = 1.0;
    for (const auto& level : s->levels_) {
      for (double v : level) {
        total_weight += weight;
        const double delta = v - mean;
        mean += delta * weight / total_weight;
        m2 += weight * delta * (v - mean);
      }
      weight *= 2.0;
    }
  }
  Moments m;
  m.mean = mean;
  m.stddev = total_weight > 1.0 ? std::sqrt(std::max(0.0, m2 / (total_weight - 1.0))) : 0.0;
  return m;
}

nlohmann::json KllSketch::to_json() const {
  return nlohmann::json{{"version", 1}, {"k", k_},     {"n", n_},          {"rng_state", rng_state_},
                        {"min", min_},  {"max", max_}, {"levels", levels_}};
}

KllSketch KllSketch::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("KllSketch: unsupported snapshot version");
  KllSketch s(j.at("k").get<std::uint32_t>());
  s.n_ = j.at("n").get<std::uint64_t>();
  s.rng_state_ = j.at("rng_state").get<std::uint64_t>();
  s.min_ = j.at("min").get<double>();
  s.max_ = j.at("max").get<double>();
  auto levels = j.at("levels").get<std::vector<std::vector<double>>>();
  if (levels.empty()) throw std::invalid_argument("KllSketch: snapshot has no levels");
  while (s.levels_.size() < levels.size()) s.grow();
  s.levels_ = std::move(levels);
  s.recount();
  std::uint64_t weight = 1, total = 0;
  for (const auto& level : s.levels_) {
    total += weight * level.size();
    weight <<= 1;
  }
  if (total != s.n_) throw std::invalid_argument("KllSketch: snapshot weights do not sum to n");
  return s;
}

}  // namespace firstdrive
