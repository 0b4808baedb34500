#include "firstdrive/adwin.hpp"

#include <cmath>
#include <stdexcept>

namespace firstdrive {
namespace {

// Variance-sum of two adjacent groups (Chan et al.).
double combined_m2(double m2a, double totala, std::uint64_t na, double m2b, double totalb, std::uint64_t nb) {
  const double ma = totala / static_cast<double>(na);
  const double mb = totalb / static_cast<double>(nb);
  const double d = ma - mb;
  return m2a + m2b + static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb) * d * d;
}

}  // namespace

Adwin::Adwin() : Adwin(Options{}) {}

Adwin::Adwin(Options options) : options_(options) {
  if (!(options_.delta > 0.0 && options_.delta < 1.0)) throw std::invalid_argument("Adwin: delta must be in (0, 1)");
  if (options_.clock == 0 || options_.max_buckets < 2) throw std::invalid_argument("Adwin: bad options");
}

std::size_t Adwin::bucket_count() const {
  std::size_t n = 0;
  for (const auto& row : rows_) n += row.size();
  return n;
}

bool Adwin::update(double value) {
  insert(value);
  compress();
  return detect();
}

void Adwin::insert(double value) {
  if (rows_.empty()) rows_.emplace_back();
  rows_[0].push_back(Bucket{value, 0.0, 1});
  if (width_ > 0) {
    const double prev_mean = total_ / static_cast<double>(width_);
    const double d = value - prev_mean;
    m2_ += static_cast<double>(width_) / static_cast<double>(width_ + 1) * d * d;
  }
  ++width_;
  total_ += value;
}

void Adwin::compress() {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].size() <= options_.max_buckets) break;
    const Bucket a = rows_[i][0];
    const Bucket b = rows_[i][1];
    rows_[i].pop_front();
    rows_[i].pop_front();
    if (i + 1 == rows_.size()) rows_.emplace_back();
    rows_[i + 1].push_back(
        Bucket{a.total + b.total, combined_m2(a.m2, a.total, a.size, b.m2, b.total, b.size), a.size + b.size});
  }
}

double Adwin::log_term() const {
  return std::log(2.0 * std::log(static_cast<double>(width_)) / options_.delta);
}

bool Adwin::cut(std::uint64_t n0, std::uint64_t n1, double mean_diff, double delta_prime, double variance) const {
  const double min_w = static_cast<double>(options_.min_window);
  const double m_recip = 1.0 / (static_cast<double>(n0) - min_w + 1.0) + 1.0 / (static_cast<double>(n1) - min_w + 1.0);
  const double epsilon = std::sqrt(2.0 * m_recip * variance * delta_prime) + 2.0 / 3.0 * delta_prime * m_recip;
  return std::fabs(mean_diff) > epsilon;
}

bool Adwin::detect() {
  ++ticks_;
  if (ticks_ % options_.clock != 0 || width_ <= options_.grace_period) return false;
  bool drift = false;
  bool shrunk = true;
  while (shrunk && width_ > options_.grace_period) {
    shrunk = false;
    std::uint64_t n0 = 0;
    std::uint64_t n1 = width_;
    double u0 = 0.0;
    double u1 = total_;
    const double delta_prime = log_term();
    const double var = variance();
    // Walk split points from the oldest bucket towards the newest.
    for (std::size_t r = rows_.size(); r-- > 0 && !shrunk;) {
      for (std::size_t b = 0; b < rows_[r].size(); ++b) {
        const Bucket& bucket = rows_[r][b];
        n0 += bucket.size;
        n1 -= bucket.size;
        u0 += bucket.total;
        u1 -= bucket.total;
        if (n1 == 0) break;
        if (n0 >= options_.min_window && n1 >= options_.min_window &&
            cut(n0, n1, u0 / static_cast<double>(n0) - u1 / static_cast<double>(n1), delta_prime, var)) {
          if (!drift) last_cut_increased_ = u1 / static_cast<double>(n1) > u0 / static_cast<double>(n0);
          drop_oldest();
          drift = true;
          shrunk = true;
          break;
        }
      }
    }
  }
  if (drift) ++detections_;
  return drift;
}

void Adwin::drop_oldest() {
  while (!rows_.empty() && rows_.back().empty()) rows_.pop_back();
  if (rows_.empty()) return;
  const Bucket b = rows_.back().front();
  rows_.back().pop_front();
  const std::uint64_t rest = width_ - b.size;
  if (rest == 0) {
    width_ = 0;
    total_ = 0.0;
    m2_ = 0.0;
  } else {
    const double rest_total = total_ - b.total;
    const double d = b.total / static_cast<double>(b.size) - rest_total / static_cast<double>(rest);
    m2_ -= b.m2 + static_cast<double>(b.size) * static_cast<double>(rest) / static_cast<double>(width_) * d * d;
    if (m2_ < 0.0) m2_ = 0.0;
    width_ = rest;
    total_ = rest_total;
  }
  while (!rows_.empty() && rows_.back().empty()) rows_.pop_back();
}

nlohmann::json Adwin::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : rows_) {
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& b : row) jr.push_back({b.total, b.m2, b.size});
    rows.push_back(std::move(jr));
  }
  return {{"version", 1},
          {"options",
           {{"delta", options_.delta},
            {"clock", options_.clock},
            {"max_buckets", options_.max_buckets},
            {"min_window", options_.min_window},
            {"grace_period", options_.grace_period}}},
          {"rows", rows},
          {"width", width_},
          {"total", total_},
          {"m2", m2_},
          {"ticks", ticks_},
          {"detections", detections_},
          {"last_cut_increased", last_cut_increased_}};
}

Adwin Adwin::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("Adwin: unsupported snapshot version");
  const auto& jo = j.at("options");
  Options o;
  o.delta = jo.at("delta").get<double>();
  o.clock = jo.at("clock").get<std::uint32_t>();
  o.max_buckets = jo.at("max_buckets").get<std::uint32_t>();
  o.min_window = jo.at("min_window").get<std::uint32_t>();
  o.grace_period = jo.at("grace_period").get<std::uint32_t>();
  Adwin a(o);
  std::uint64_t width = 0;
  for (const auto& jr : j.at("rows")) {
    std::deque<Bucket> row;
    for (const auto& b : jr) {
      row.push_back(Bucket{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<std::uint64_t>()});
      width += row.back().size;
    }
    a.rows_.push_back(std::move(row));
  }
  a.width_ = j.at("width").get<std::uint64_t>();
  if (width != a.width_) throw std::invalid_argument("Adwin: bucket sizes do not sum to the window width");
  a.total_ = j.at("total").get<double>();
  a.m2_ = j.at("m2").get<double>();
  a.ticks_ = j.at("ticks").get<std::uint64_t>();
  a.detections_ = j.at("detections").get<std::uint64_t>();
  a.last_cut_increased_ = j.at("last_cut_increased").get<bool>();
  return a;
}

}  // namespace firstdrive
