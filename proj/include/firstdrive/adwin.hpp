#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

#include <json.hpp>

namespace firstdrive {

// ADWIN adaptive window (Bifet & Gavalda) over an exponential histogram of
// buckets. Row i stores buckets summarising 2^i consecutive values; each row
// holds at most `max_buckets` before its two oldest buckets merge upward.
class Adwin {
 public:
  struct Options {
    double delta = 0.002;
    std::uint32_t clock = 1;         // check for a cut every `clock` updates
    std::uint32_t max_buckets = 5;
    std::uint32_t min_window = 5;    // smallest sub-window a cut may leave
    std::uint32_t grace_period = 10; // no checks before the window reaches this width
  };

  Adwin();
  explicit Adwin(Options options);

  // Adds a value; returns true when the window was cut (drift detected).
  bool update(double value);

  double mean() const { return width_ == 0 ? 0.0 : total_ / static_cast<double>(width_); }
  // Population variance of the values in the window.
  double variance() const { return width_ == 0 ? 0.0 : m2_ / static_cast<double>(width_); }
  std::uint64_t width() const { return width_; }
  double total() const { return total_; }
  std::size_t bucket_count() const;
  std::uint64_t detections() const { return detections_; }
  // Direction of the most recent cut: true if the newer sub-window had the
  // larger mean.
  bool last_cut_increased() const { return last_cut_increased_; }
  const Options& options() const { return options_; }

  nlohmann::json to_json() const;
  static Adwin from_json(const nlohmann::json& j);

 private:
  struct Bucket {
    double total = 0.0;
    double m2 = 0.0;
    std::uint64_t size = 0;
  };

  void insert(double value);
  void compress();
  bool detect();
  // ln(2 ln(width) / delta), fixed for one pass over the split points.
  double log_term() const;
  bool cut(std::uint64_t n0, std::uint64_t n1, double mean_diff, double delta_prime, double variance) const;
  void drop_oldest();

  Options options_;
  // rows_[i].front() is the oldest bucket of row i; higher rows are older.
  std::vector<std::deque<Bucket>> rows_;
  std::uint64_t width_ = 0;
  double total_ = 0.0;
  double m2_ = 0.0;
  std::uint64_t ticks_ = 0;
  std::uint64_t detections_ = 0;
  bool last_cut_increased_ = false;
};

}  // namespace firstdrive
