#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "firstdrive/kll_sketch.hpp"
#include "firstdrive/rng.hpp"

namespace firstdrive {

// Weighted count / mean / sum of squared deviations.
struct VarianceStats {
  double weight = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double y, double w = 1.0);
  void merge(const VarianceStats& other);
  // Population variance m2 / weight; 0 when empty.
  double variance() const { return weight > 0.0 ? m2 / weight : 0.0; }
};

// sqrt(R^2 ln(1/delta) / (2n)). Throws std::domain_error unless R > 0,
// 0 < delta < 1 and n >= 1.
double hoeffding_bound(double range, double delta, double n);

struct HoeffdingTreeOptions {
  std::uint32_t grace_period = 50;
  double split_confidence = 1e-5;
  double tie_threshold = 0.05;
  std::uint32_t num_bins = 10;
  std::uint32_t max_depth = 20;
  std::uint32_t sketch_k = 64;
  // Number of features drawn (without replacement) at each split attempt;
  // 0 means all features.
  std::uint32_t subspace_size = 0;
};

struct SplitRule {
  std::size_t feature = 0;
  double threshold = 0.0;  // x[feature] < threshold goes left
};

// Incremental regression tree. A leaf buffers its first `grace_period` examples
// per feature to fix the range of an equal-width histogram; later values outside
// that range fall into the edge bins. Every `grace_period` units of weight the
// leaf scores the interior bin edges by variance reduction and splits once the
// Hoeffding bound separates the best feature from the runner-up.
class HoeffdingTree {
 public:
  HoeffdingTree(std::size_t num_features, HoeffdingTreeOptions options = {}, std::uint64_t seed = 0);

  // `weight` copies of (x, y). Throws std::invalid_argument on a length mismatch.
  void learn_one(std::span<const double> x, double y, unsigned weight = 1);
  // predict(x) as it stood before this update, then learn_one(x, y, weight).
  // One traversal instead of two.
  double predict_then_learn(std::span<const double> x, double y, unsigned weight);

  // Mean target of the reached leaf; the tree-wide mean (0 when untrained)
  // for a leaf that has seen nothing.
  double predict(std::span<const double> x) const;

  const KllSketch& leaf_sketch(std::span<const double> x) const;

  struct LeafView {
    double prediction;
    const KllSketch* sketch;
  };
  // predict(x) and leaf_sketch(x) from a single traversal.
  LeafView leaf_view(std::span<const double> x) const;

  std::size_t num_features() const { return num_features_; }
  std::size_t depth() const;
  std::size_t leaf_count() const;
  std::size_t node_count() const { return nodes_.size(); }
  std::optional<SplitRule> root_split() const;
  const HoeffdingTreeOptions& options() const { return options_; }
  // Number of updates with positive weight, regardless of the weight itself.
  std::uint64_t observations() const { return observations_; }

  // Visits every leaf's sketch.
  template <typename F>
  void for_each_leaf_sketch(F&& f) const {
    for (const auto& node : nodes_) {
      if (node.leaf) f(node.leaf->sketch);
    }
  }

  nlohmann::json to_json() const;
  static HoeffdingTree from_json(const nlohmann::json& j);

 private:
  struct Sample {
    double x;
    double y;
    double w;
  };
  struct FeatureObserver {
    std::vector<Sample> buffer;
    std::vector<VarianceStats> bins;  // empty until the range is fixed
    double lo = 0.0;
    double hi = 0.0;
  };
  struct Leaf {
    VarianceStats stats;
    double weight_at_last_attempt = 0.0;
    std::vector<FeatureObserver> observers;
    KllSketch sketch;
  };
  // Heap-held leaf payload so split nodes stay small during traversal. Copies
  // are deep.
  class LeafSlot {
   public:
    LeafSlot() = default;
    LeafSlot(const LeafSlot& o) : p_(o.p_ ? std::make_unique<Leaf>(*o.p_) : nullptr) {}
    LeafSlot(LeafSlot&&) noexcept = default;
    LeafSlot& operator=(const LeafSlot& o) {
      if (this != &o) p_ = o.p_ ? std::make_unique<Leaf>(*o.p_) : nullptr;
      return *this;
    }
    LeafSlot& operator=(LeafSlot&&) noexcept = default;
    LeafSlot& operator=(Leaf leaf) {
      p_ = std::make_unique<Leaf>(std::move(leaf));
      return *this;
    }
    bool has_value() const { return p_ != nullptr; }
    explicit operator bool() const { return has_value(); }
    Leaf& operator*() { return *p_; }
    const Leaf& operator*() const { return *p_; }
    Leaf* operator->() { return p_.get(); }
    const Leaf* operator->() const { return p_.get(); }
    void reset() { p_.reset(); }

   private:
    std::unique_ptr<Leaf> p_;
  };
  struct Node {
    SplitRule rule;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::uint32_t depth = 0;
    LeafSlot leaf;
  };
  struct Candidate {
    double reduction = 0.0;
    std::size_t feature = 0;
    std::size_t bin_edge = 0;
  };

  std::size_t find_leaf(std::span<const double> x) const;
  double leaf_prediction(std::size_t leaf_index) const;
  void learn_at(std::size_t leaf_index, std::span<const double> x, double y, unsigned weight);
  Leaf make_leaf();
  void observe(FeatureObserver& obs, double x, double y, double w) const;
  void fix_range(FeatureObserver& obs) const;
  std::optional<Candidate> best_for_feature(const FeatureObserver& obs, std::size_t feature) const;
  void attempt_split(std::size_t node_index);
  std::vector<std::size_t> draw_subspace();

  std::size_t num_features_;
  HoeffdingTreeOptions options_;
  std::uint64_t seed_;
  Rng rng_;
  std::uint64_t leaves_created_ = 0;
  std::uint64_t observations_ = 0;
  VarianceStats global_;
  std::vector<Node> nodes_;
};

}  // namespace firstdrive
