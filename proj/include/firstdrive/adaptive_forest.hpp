#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "firstdrive/adwin.hpp"
#include "firstdrive/hoeffding_tree.hpp"
#include "firstdrive/kll_sketch.hpp"
#include "firstdrive/rng.hpp"

namespace firstdrive {

struct ForestOptions {
  std::size_t n_trees = 10;
  double lambda = 6.0;  // online-bagging Poisson rate
  bool drift_detection = true;
  double warning_delta = 0.01;
  double drift_delta = 0.002;
  // subspace_size 0 here means ceil(sqrt(d)).
  HoeffdingTreeOptions tree{};
};

// Adaptive random forest for regression: Hoeffding trees trained with online
// bagging, each watched by a warning and a drift ADWIN fed with its absolute
// error. A warning (re)starts a background tree; a drift swaps it in.
//
// Only increases of the error trigger either action. A falling error, which is
// what every tree produces while it is still learning, is not treated as drift.
class AdaptiveForest {
 public:
  AdaptiveForest(std::size_t num_features, ForestOptions options = {}, std::uint64_t seed = 0);

  void learn_one(std::span<const double> x, double y);

  // Mean of the foreground trees' predictions.
  double predict(std::span<const double> x) const;

  // Union of the sketches of the leaves reached by x. Throws InsufficientHistory
  // when every reached leaf is empty.
  KllSketch merged_sketch(std::span<const double> x) const;
  struct Summary {
    double point;                // predict(x)
    KllSketch::Moments moments;  // reached leaves' items pooled without compaction
  };
  // Throws InsufficientHistory when every reached leaf is empty.
  Summary summarize(std::span<const double> x) const;

  std::size_t size() const { return members_.size(); }
  std::size_t num_features() const { return num_features_; }
  const HoeffdingTree& tree(std::size_t i) const { return members_.at(i).tree; }
  bool has_background(std::size_t i) const { return members_.at(i).background.has_value(); }
  std::uint64_t replacements() const { return replacements_; }
  std::uint64_t warnings() const { return warnings_; }
  const ForestOptions& options() const { return options_; }

  nlohmann::json to_json() const;
  static AdaptiveForest from_json(const nlohmann::json& j);

 private:
  struct Member {
    HoeffdingTree tree;
    std::optional<HoeffdingTree> background;
    Adwin warning;
    Adwin drift;
  };

  HoeffdingTree fresh_tree();
  Adwin make_detector(double delta) const;

  std::size_t num_features_;
  ForestOptions options_;
  std::uint64_t seed_;
  Rng rng_;
  std::uint64_t trees_created_ = 0;
  std::uint64_t replacements_ = 0;
  std::uint64_t warnings_ = 0;
  std::vector<Member> members_;
};

}  // namespace firstdrive
