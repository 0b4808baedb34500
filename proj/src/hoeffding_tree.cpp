#include "firstdrive/hoeffding_tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace firstdrive {
namespace {

constexpr double kMinVariance = 1e-12;

nlohmann::json stats_json(const VarianceStats& s) { return nlohmann::json::array({s.weight, s.mean, s.m2}); }

VarianceStats stats_from_json(const nlohmann::json& j) {
  VarianceStats s;
  s.weight = j.at(0).get<double>();
  s.mean = j.at(1).get<double>();
  s.m2 = j.at(2).get<double>();
  return s;
}

double edge(double lo, double hi, std::size_t i, std::size_t bins) {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
}

}  // namespace

void VarianceStats::add(double y, double w) {
  if (w <= 0.0) return;
  const double total = weight + w;
  const double delta = y - mean;
  mean += delta * w / total;
  m2 += w * delta * (y - mean);
  weight = total;
}

void VarianceStats::merge(const VarianceStats& other) {
  if (other.weight <= 0.0) return;
  if (weight <= 0.0) {
    *this = other;
    return;
  }
  const double total = weight + other.weight;
  const double delta = other.mean - mean;
  mean += delta * other.weight / total;
  m2 += other.m2 + delta * delta * weight * other.weight / total;
  weight = total;
}

double hoeffding_bound(double range, double delta, double n) {
  if (!(range > 0.0)) throw std::domain_error("hoeffding_bound: range must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw std::domain_error("hoeffding_bound: delta must lie in (0, 1)");
  if (!(n >= 1.0)) throw std::domain_error("hoeffding_bound: n must be at least 1");
  return std::sqrt(range * range * std::log(1.0 / delta) / (2.0 * n));
}

HoeffdingTree::HoeffdingTree(std::size_t num_features, HoeffdingTreeOptions options, std::uint64_t seed)
    : num_features_(num_features), options_(options), seed_(seed), rng_(mix_seed(seed)) {
  if (num_features == 0) throw std::invalid_argument("HoeffdingTree: need at least one feature");
  if (options_.grace_period == 0) throw std::invalid_argument("HoeffdingTree: grace_period must be positive");
  if (options_.num_bins < 2) throw std::invalid_argument("HoeffdingTree: num_bins must be at least 2");
  if (!(options_.split_confidence > 0.0 && options_.split_confidence < 1.0))
    throw std::invalid_argument("HoeffdingTree: split_confidence must lie in (0, 1)");
  Node root;
  root.leaf = make_leaf();
  nodes_.push_back(std::move(root));
}

HoeffdingTree::Leaf HoeffdingTree::make_leaf() {
  Leaf leaf{VarianceStats{}, 0.0, std::vector<FeatureObserver>(num_features_),
            KllSketch(options_.sketch_k, derive_seed(seed_, leaves_created_++))};
  return leaf;
}

std::size_t HoeffdingTree::find_leaf(std::span<const double> x) const {
  if (x.size() != num_features_) throw std::invalid_argument("HoeffdingTree: feature vector length mismatch");
  std::size_t i = 0;
  while (!nodes_[i].leaf) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[n.rule.feature] < n.rule.threshold ? n.left : n.right);
  }
  return i;
}

void HoeffdingTree::fix_range(FeatureObserver& obs) const {
  double lo = obs.buffer.front().x;
  double hi = lo;
  for (const auto& s : obs.buffer) {
    lo = std::min(lo, s.x);
    hi = std::max(hi, s.x);
  }
  if (hi - lo <= 0.0) {
    // Unit-width range around a constant so later distinct values can still split.
    lo -= 0.5;
    hi += 0.5;
  }
  obs.lo = lo;
  obs.hi = hi;
  obs.bins.assign(options_.num_bins, VarianceStats{});
  auto buffer = std::move(obs.buffer);
  obs.buffer.clear();
  for (const auto& s : buffer) observe(obs, s.x, s.y, s.w);
}

void HoeffdingTree::observe(FeatureObserver& obs, double x, double y, double w) const {
  if (obs.bins.empty()) {
    obs.buffer.push_back(Sample{x, y, w});
    return;
  }
  // Bin index = number of interior edges at or below x, using the same edge
  // values that routing compares against.
  const std::size_t nb = obs.bins.size();
  std::size_t b = 0;
  while (b + 1 < nb && x >= edge(obs.lo, obs.hi, b + 1, nb)) ++b;
  obs.bins[b].add(y, w);
}

void HoeffdingTree::learn_one(std::span<const double> x, double y, unsigned weight) {
  if (x.size() != num_features_) throw std::invalid_argument("HoeffdingTree: feature vector length mismatch");
  if (!std::isfinite(y)) throw std::invalid_argument("HoeffdingTree: target must be finite");
  if (weight == 0) return;
  learn_at(find_leaf(x), x, y, weight);
}

double HoeffdingTree::predict_then_learn(std::span<const double> x, double y, unsigned weight) {
  if (!std::isfinite(y)) throw std::invalid_argument("HoeffdingTree: target must be finite");
  const std::size_t li = find_leaf(x);
  const double prediction = leaf_prediction(li);
  if (weight > 0) learn_at(li, x, y, weight);
  return prediction;
}

void HoeffdingTree::learn_at(std::size_t li, std::span<const double> x, double y, unsigned weight) {
  const double w = static_cast<double>(weight);
  ++observations_;
  global_.add(y, w);
  Leaf& leaf = *nodes_[li].leaf;
  leaf.stats.add(y, w);
  for (unsigned k = 0; k < weight; ++k) leaf.sketch.insert(y);
  for (std::size_t f = 0; f < num_features_; ++f) {
    FeatureObserver& obs = leaf.observers[f];
    observe(obs, x[f], y, w);
    if (obs.bins.empty() && obs.buffer.size() >= options_.grace_period) fix_range(obs);
  }
  if (leaf.stats.weight - leaf.weight_at_last_attempt >= static_cast<double>(options_.grace_period)) attempt_split(li);
}

std::vector<std::size_t> HoeffdingTree::draw_subspace() {
  std::vector<std::size_t> idx(num_features_);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t m = options_.subspace_size;
  if (m == 0 || m >= num_features_) return idx;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng_.below(num_features_ - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::optional<HoeffdingTree::Candidate> HoeffdingTree::best_for_feature(const FeatureObserver& obs,
                                                                        std::size_t feature) const {
  if (obs.bins.empty()) return std::nullopt;
  VarianceStats total;
  for (const auto& b : obs.bins) total.merge(b);
  if (total.weight <= 0.0) return std::nullopt;
  const double var_total = total.variance();
  std::optional<Candidate> best;
  VarianceStats left;
  for (std::size_t i = 1; i < obs.bins.size(); ++i) {
    left.merge(obs.bins[i - 1]);
    VarianceStats right;
    for (std::size_t j = i; j < obs.bins.size(); ++j) right.merge(obs.bins[j]);
    if (left.weight <= 0.0 || right.weight <= 0.0) continue;
    const double child = (left.m2 + right.m2) / total.weight;
    const double reduction = var_total - child;
    if (!best || reduction > best->reduction) best = Candidate{reduction, feature, i};
  }
  return best;
}

void HoeffdingTree::attempt_split(std::size_t node_index) {
  Leaf& leaf = *nodes_[node_index].leaf;
  leaf.weight_at_last_attempt = leaf.stats.weight;
  if (nodes_[node_index].depth >= options_.max_depth) return;
  if (leaf.stats.variance() <= kMinVariance) return;

  std::optional<Candidate> best;
  std::optional<Candidate> second;
  double var_total = 0.0;
  for (std::size_t f : draw_subspace()) {
    FeatureObserver& obs = leaf.observers[f];
    if (obs.bins.empty() && !obs.buffer.empty()) fix_range(obs);
    const auto c = best_for_feature(obs, f);
    if (!c) continue;
    if (var_total == 0.0) {
      VarianceStats total;
      for (const auto& b : obs.bins) total.merge(b);
      var_total = total.variance();
    }
    if (!best || c->reduction > best->reduction) {
      second = best;
      best = c;
    } else if (!second || c->reduction > second->reduction) {
      second = c;
    }
  }
  if (!best || best->reduction <= 0.0 || var_total <= kMinVariance) return;

  const double ratio_best = best->reduction / var_total;
  const double ratio_second = second ? std::max(0.0, second->reduction) / var_total : 0.0;
  const double eps = hoeffding_bound(1.0, options_.split_confidence, leaf.stats.weight);
  if (!(ratio_best - ratio_second > eps || eps < options_.tie_threshold)) return;

  const FeatureObserver& obs = leaf.observers[best->feature];
  VarianceStats left_stats, right_stats;
  for (std::size_t j = 0; j < obs.bins.size(); ++j) (j < best->bin_edge ? left_stats : right_stats).merge(obs.bins[j]);
  const SplitRule rule{best->feature, edge(obs.lo, obs.hi, best->bin_edge, obs.bins.size())};
  const std::uint32_t depth = nodes_[node_index].depth;

  Node left;
  left.depth = depth + 1;
  left.leaf = make_leaf();
  left.leaf->stats = left_stats;
  Node right;
  right.depth = depth + 1;
  right.leaf = make_leaf();
  right.leaf->stats = right_stats;

  const auto li = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(std::move(left));
  nodes_.push_back(std::move(right));
  Node& parent = nodes_[node_index];
  parent.leaf.reset();
  parent.rule = rule;
  parent.left = li;
  parent.right = li + 1;
}

double HoeffdingTree::leaf_prediction(std::size_t leaf_index) const {
  const Leaf& leaf = *nodes_[leaf_index].leaf;
  if (leaf.stats.weight > 0.0) return leaf.stats.mean;
  return global_.mean;
}

double HoeffdingTree::predict(std::span<const double> x) const { return leaf_prediction(find_leaf(x)); }

HoeffdingTree::LeafView HoeffdingTree::leaf_view(std::span<const double> x) const {
  const std::size_t li = find_leaf(x);
  return {leaf_prediction(li), &nodes_[li].leaf->sketch};
}

const KllSketch& HoeffdingTree::leaf_sketch(std::span<const double> x) const { return nodes_[find_leaf(x)].leaf->sketch; }

std::size_t HoeffdingTree::depth() const {
  std::uint32_t d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

std::size_t HoeffdingTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.leaf.has_value(); }));
}

std::optional<SplitRule> HoeffdingTree::root_split() const {
  if (nodes_.front().leaf) return std::nullopt;
  return nodes_.front().rule;
}

nlohmann::json HoeffdingTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json jn{{"depth", n.depth}};
    if (n.leaf) {
      nlohmann::json observers = nlohmann::json::array();
      for (const auto& o : n.leaf->observers) {
        nlohmann::json buffer = nlohmann::json::array();
        for (const auto& s : o.buffer) buffer.push_back({s.x, s.y, s.w});
        nlohmann::json bins = nlohmann::json::array();
        for (const auto& b : o.bins) bins.push_back(stats_json(b));
        observers.push_back({{"lo", o.lo}, {"hi", o.hi}, {"buffer", buffer}, {"bins", bins}});
      }
      jn["leaf"] = {{"stats", stats_json(n.leaf->stats)},
                    {"last_attempt", n.leaf->weight_at_last_attempt},
                    {"observers", observers},
                    {"sketch", n.leaf->sketch.to_json()}};
    } else {
      jn["feature"] = n.rule.feature;
      jn["threshold"] = n.rule.threshold;
      jn["left"] = n.left;
      jn["right"] = n.right;
    }
    nodes.push_back(std::move(jn));
  }
  std::ostringstream rng_state;
  rng_state << rng_.engine();
  return {{"version", 1},
          {"num_features", num_features_},
          {"options",
           {{"grace_period", options_.grace_period},
            {"split_confidence", options_.split_confidence},
            {"tie_threshold", options_.tie_threshold},
            {"num_bins", options_.num_bins},
            {"max_depth", options_.max_depth},
            {"sketch_k", options_.sketch_k},
            {"subspace_size", options_.subspace_size}}},
          {"seed", seed_},
          {"rng", rng_state.str()},
          {"leaves_created", leaves_created_},
          {"observations", observations_},
          {"global", stats_json(global_)},
          {"nodes", nodes}};
}

HoeffdingTree HoeffdingTree::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("HoeffdingTree: unsupported snapshot version");
  const auto& jo = j.at("options");
  HoeffdingTreeOptions o;
  o.grace_period = jo.at("grace_period").get<std::uint32_t>();
  o.split_confidence = jo.at("split_confidence").get<double>();
  o.tie_threshold = jo.at("tie_threshold").get<double>();
  o.num_bins = jo.at("num_bins").get<std::uint32_t>();
  o.max_depth = jo.at("max_depth").get<std::uint32_t>();
  o.sketch_k = jo.at("sketch_k").get<std::uint32_t>();
  o.subspace_size = jo.at("subspace_size").get<std::uint32_t>();
  HoeffdingTree t(j.at("num_features").get<std::size_t>(), o, j.at("seed").get<std::uint64_t>());
  std::istringstream rng_state(j.at("rng").get<std::string>());
  rng_state >> t.rng_.engine();
  t.leaves_created_ = j.at("leaves_created").get<std::uint64_t>();
  t.observations_ = j.at("observations").get<std::uint64_t>();
  t.global_ = stats_from_json(j.at("global"));
  t.nodes_.clear();
  for (const auto& jn : j.at("nodes")) {
    Node n;
    n.depth = jn.at("depth").get<std::uint32_t>();
    if (jn.contains("leaf")) {
      const auto& jl = jn.at("leaf");
      Leaf leaf{stats_from_json(jl.at("stats")), jl.at("last_attempt").get<double>(), {},
                KllSketch::from_json(jl.at("sketch"))};
      for (const auto& jobs : jl.at("observers")) {
        FeatureObserver obs;
        obs.lo = jobs.at("lo").get<double>();
        obs.hi = jobs.at("hi").get<double>();
        for (const auto& s : jobs.at("buffer")) obs.buffer.push_back(Sample{s.at(0), s.at(1), s.at(2)});
        for (const auto& b : jobs.at("bins")) obs.bins.push_back(stats_from_json(b));
        leaf.observers.push_back(std::move(obs));
      }
      if (leaf.observers.size() != t.num_features_) throw std::invalid_argument("HoeffdingTree: observer count mismatch");
      n.leaf = std::move(leaf);
    } else {
      n.rule.feature = jn.at("feature").get<std::size_t>();
      n.rule.threshold = jn.at("threshold").get<double>();
      n.left = jn.at("left").get<std::int32_t>();
      n.right = jn.at("right").get<std::int32_t>();
      if (n.rule.feature >= t.num_features_) throw std::invalid_argument("HoeffdingTree: split feature out of range");
    }
    t.nodes_.push_back(std::move(n));
  }
  const auto count = static_cast<std::int32_t>(t.nodes_.size());
  for (const auto& n : t.nodes_) {
    if (!n.leaf && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count))
      throw std::invalid_argument("HoeffdingTree: bad child index");
  }
  if (t.nodes_.empty()) throw std::invalid_argument("HoeffdingTree: snapshot has no nodes");
  return t;
}

}  // namespace firstdrive
