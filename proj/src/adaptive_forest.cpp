#include "firstdrive/adaptive_forest.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "firstdrive/errors.hpp"

namespace firstdrive {

AdaptiveForest::AdaptiveForest(std::size_t num_features, ForestOptions options, std::uint64_t seed)
    : num_features_(num_features), options_(options), seed_(seed), rng_(derive_seed(seed, 0)) {
  if (options_.n_trees == 0) throw std::invalid_argument("AdaptiveForest: need at least one tree");
  if (!(options_.lambda >= 0.0)) throw std::invalid_argument("AdaptiveForest: lambda must be non-negative");
  if (options_.tree.subspace_size == 0)
    options_.tree.subspace_size = static_cast<std::uint32_t>(std::ceil(std::sqrt(static_cast<double>(num_features))));
  members_.reserve(options_.n_trees);
  for (std::size_t i = 0; i < options_.n_trees; ++i) {
    members_.push_back(Member{fresh_tree(), std::nullopt, make_detector(options_.warning_delta),
                              make_detector(options_.drift_delta)});
  }
}

HoeffdingTree AdaptiveForest::fresh_tree() {
  return HoeffdingTree(num_features_, options_.tree, derive_seed(seed_, 1 + trees_created_++));
}

Adwin AdaptiveForest::make_detector(double delta) const {
  Adwin::Options o;
  o.delta = delta;
  return Adwin(o);
}

void AdaptiveForest::learn_one(std::span<const double> x, double y) {
  if (x.size() != num_features_) throw std::invalid_argument("AdaptiveForest: feature vector length mismatch");
  for (auto& m : members_) {
    bool warn = false;
    bool drift = false;
    const unsigned w = rng_.poisson(options_.lambda);
    if (options_.drift_detection) {
      const double err = std::fabs(y - m.tree.predict_then_learn(x, y, w));
      warn = m.warning.update(err) && m.warning.last_cut_increased();
      drift = m.drift.update(err) && m.drift.last_cut_increased();
    } else {
      m.tree.learn_one(x, y, w);
    }
    if (w > 0 && m.background) m.background->learn_one(x, y, w);
    if (drift) {
      m.tree = m.background ? std::move(*m.background) : fresh_tree();
      m.background.reset();
      m.warning = make_detector(options_.warning_delta);
      m.drift = make_detector(options_.drift_delta);
      ++replacements_;
    } else if (warn) {
      m.background = fresh_tree();
      m.warning = make_detector(options_.warning_delta);
      ++warnings_;
    }
  }
}

double AdaptiveForest::predict(std::span<const double> x) const {
  double sum = 0.0;
  for (const auto& m : members_) sum += m.tree.predict(x);
  return sum / static_cast<double>(members_.size());
}

KllSketch AdaptiveForest::merged_sketch(std::span<const double> x) const {
  std::optional<KllSketch> merged;
  for (const auto& m : members_) {
    const KllSketch& s = m.tree.leaf_sketch(x);
    if (s.empty()) continue;
    if (!merged) {
      merged = s;
    } else {
      merged->merge_from(s);
    }
  }
  if (!merged) throw InsufficientHistory("AdaptiveForest: every reached leaf is empty");
  return std::move(*merged);
}

AdaptiveForest::Summary AdaptiveForest::summarize(std::span<const double> x) const {
  std::vector<const KllSketch*> reached;
  reached.reserve(members_.size());
  double sum = 0.0;
  for (const auto& m : members_) {
    const auto view = m.tree.leaf_view(x);
    sum += view.prediction;
    if (!view.sketch->empty()) reached.push_back(view.sketch);
  }
  if (reached.empty()) throw InsufficientHistory("AdaptiveForest: every reached leaf is empty");
  return {sum / static_cast<double>(members_.size()), KllSketch::pooled_moments(reached)};
}

nlohmann::json AdaptiveForest::to_json() const {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : members_) {
    members.push_back({{"tree", m.tree.to_json()},
                       {"background", m.background ? m.background->to_json() : nlohmann::json()},
                       {"warning", m.warning.to_json()},
                       {"drift", m.drift.to_json()}});
  }
  std::ostringstream rng_state;
  rng_state << rng_.engine();
  return {{"version", 1},
          {"num_features", num_features_},
          {"n_trees", options_.n_trees},
          {"lambda", options_.lambda},
          {"drift_detection", options_.drift_detection},
          {"warning_delta", options_.warning_delta},
          {"drift_delta", options_.drift_delta},
          {"seed", seed_},
          {"rng", rng_state.str()},
          {"trees_created", trees_created_},
          {"replacements", replacements_},
          {"warnings", warnings_},
          {"members", members}};
}

AdaptiveForest AdaptiveForest::from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("AdaptiveForest: unsupported snapshot version");
  const auto& jm = j.at("members");
  if (jm.empty()) throw std::invalid_argument("AdaptiveForest: snapshot has no trees");
  std::vector<Member> members;
  for (const auto& m : jm) {
    std::optional<HoeffdingTree> background;
    if (!m.at("background").is_null()) background = HoeffdingTree::from_json(m.at("background"));
    members.push_back(Member{HoeffdingTree::from_json(m.at("tree")), std::move(background),
                             Adwin::from_json(m.at("warning")), Adwin::from_json(m.at("drift"))});
  }
  ForestOptions o;
  o.n_trees = j.at("n_trees").get<std::size_t>();
  o.lambda = j.at("lambda").get<double>();
  o.drift_detection = j.at("drift_detection").get<bool>();
  o.warning_delta = j.at("warning_delta").get<double>();
  o.drift_delta = j.at("drift_delta").get<double>();
  o.tree = members.front().tree.options();
  if (members.size() != o.n_trees) throw std::invalid_argument("AdaptiveForest: tree count mismatch");
  AdaptiveForest f(j.at("num_features").get<std::size_t>(), o, j.at("seed").get<std::uint64_t>());
  std::istringstream rng_state(j.at("rng").get<std::string>());
  rng_state >> f.rng_.engine();
  f.trees_created_ = j.at("trees_created").get<std::uint64_t>();
  f.replacements_ = j.at("replacements").get<std::uint64_t>();
  f.warnings_ = j.at("warnings").get<std::uint64_t>();
  f.members_ = std::move(members);
  return f;
}

}  // namespace firstdrive
