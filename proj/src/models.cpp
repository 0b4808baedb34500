#include "firstdrive/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "firstdrive/errors.hpp"

namespace firstdrive {
namespace {

constexpr double kMinScale = 1e-9;

void check_length(std::span<const double> x, std::size_t d, const char* who) {
  if (x.size() != d) throw std::invalid_argument(std::string(who) + ": feature vector length mismatch");
}

double dot_with_intercept(std::span<const double> theta, std::span<const double> x) {
  double s = theta[0];
  for (std::size_t j = 0; j < x.size(); ++j) s += theta[j + 1] * x[j];
  return s;
}

nlohmann::json stats_json(const VarianceStats& s) { return nlohmann::json::array({s.weight, s.mean, s.m2}); }

VarianceStats stats_from_json(const nlohmann::json& j) {
  VarianceStats s;
  s.weight = j.at(0).get<double>();
  s.mean = j.at(1).get<double>();
  s.m2 = j.at(2).get<double>();
  return s;
}

double sample_std(const VarianceStats& s) { return s.weight >= 2.0 ? std::sqrt(s.m2 / (s.weight - 1.0)) : 0.0; }

PredictionInterval gaussian_interval(double point, double sigma, double z) {
  return PredictionInterval{point, point - z * sigma, point + z * sigma, sigma};
}

}  // namespace

double z_for_confidence(double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("confidence must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + confidence / 2.0);
}

double pinball_loss(double y, double yhat, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("pinball_loss: tau must lie in (0, 1)");
  const double r = y - yhat;
  return r < 0.0 ? (tau - 1.0) * r : tau * r;
}

// ---- MeanBaseline ----

MeanBaseline::MeanBaseline(std::size_t num_features, double confidence)
    : num_features_(num_features), confidence_(confidence), z_(z_for_confidence(confidence)) {}

double MeanBaseline::predict(std::span<const double>) const { return stats_.weight > 0.0 ? stats_.mean : 0.0; }

PredictionInterval MeanBaseline::predict_interval(std::span<const double> x) const {
  return gaussian_interval(predict(x), sample_std(stats_), z_);
}

void MeanBaseline::learn_one(std::span<const double>, double y) { learn(y); }

void MeanBaseline::learn(double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("MeanBaseline: target must be finite");
  stats_.add(y);
}

nlohmann::json MeanBaseline::checkpoint() const {
  return {{"kind", "baseline"},
          {"version", 1},
          {"num_features", num_features_},
          {"confidence", confidence_},
          {"stats", stats_json(stats_)}};
}

MeanBaseline MeanBaseline::restore(const nlohmann::json& j) {
  MeanBaseline m(j.at("num_features").get<std::size_t>(), j.at("confidence").get<double>());
  m.stats_ = stats_from_json(j.at("stats"));
  return m;
}

// ---- QrModel ----

QrModel::QrModel(std::size_t num_features, QrOptions options) : num_features_(num_features), options_(options) {
  if (!(options_.confidence > 0.0 && options_.confidence < 1.0))
    throw std::invalid_argument("QrModel: confidence must lie in (0, 1)");
  if (!(options_.learning_rate >= 0.0) || !(options_.regularization >= 0.0))
    throw std::invalid_argument("QrModel: learning rate and regularization must be non-negative");
  taus_ = {(1.0 - options_.confidence) / 2.0, 0.5, (1.0 + options_.confidence) / 2.0};
  theta_.assign(3, std::vector<double>(num_features + 1, 0.0));
}

double QrModel::objective(std::span<const double> theta, std::span<const double> x, double y, double tau,
                          double regularization) {
  double norm2 = 0.0;
  for (double t : theta) norm2 += t * t;
  return pinball_loss(y, dot_with_intercept(theta, x), tau) + regularization * norm2;
}

std::vector<double> QrModel::gradient(std::span<const double> theta, std::span<const double> x, double y, double tau,
                                      double regularization) {
  const double pred = dot_with_intercept(theta, x);
  const double g = y >= pred ? -tau : 1.0 - tau;
  std::vector<double> grad(theta.size());
  grad[0] = g + 2.0 * regularization * theta[0];
  for (std::size_t j = 0; j < x.size(); ++j) grad[j + 1] = g * x[j] + 2.0 * regularization * theta[j + 1];
  return grad;
}

double QrModel::predict(std::span<const double> x) const {
  check_length(x, num_features_, "QrModel");
  return dot_with_intercept(theta_[1], x);
}

PredictionInterval QrModel::predict_interval(std::span<const double> x) const {
  check_length(x, num_features_, "QrModel");
  const double point = dot_with_intercept(theta_[1], x);
  PredictionInterval pi;
  pi.point = point;
  pi.lower = std::min(dot_with_intercept(theta_[0], x), point);
  pi.upper = std::max(dot_with_intercept(theta_[2], x), point);
  return pi;
}

void QrModel::learn_one(std::span<const double> x, double y) {
  check_length(x, num_features_, "QrModel");
  if (!std::isfinite(y)) throw std::invalid_argument("QrModel: target must be finite");
  for (std::size_t q = 0; q < 3; ++q) {
    const auto grad = gradient(theta_[q], x, y, taus_[q], options_.regularization);
    for (std::size_t j = 0; j < grad.size(); ++j) {
      theta_[q][j] -= options_.learning_rate * grad[j];
      if (!std::isfinite(theta_[q][j])) throw std::domain_error("QrModel: weights diverged (learning rate too large)");
    }
  }
}

nlohmann::json QrModel::checkpoint() const {
  return {{"kind", "qr"},
          {"version", 1},
          {"num_features", num_features_},
          {"learning_rate", options_.learning_rate},
          {"regularization", options_.regularization},
          {"confidence", options_.confidence},
          {"theta", theta_}};
}

QrModel QrModel::restore(const nlohmann::json& j) {
  QrOptions o;
  o.learning_rate = j.at("learning_rate").get<double>();
  o.regularization = j.at("regularization").get<double>();
  o.confidence = j.at("confidence").get<double>();
  QrModel m(j.at("num_features").get<std::size_t>(), o);
  auto theta = j.at("theta").get<std::vector<std::vector<double>>>();
  if (theta.size() != 3) throw std::invalid_argument("QrModel: expected three weight vectors");
  for (const auto& t : theta) {
    if (t.size() != m.num_features_ + 1) throw std::invalid_argument("QrModel: weight vector length mismatch");
  }
  m.theta_ = std::move(theta);
  return m;
}

// ---- QknnModel ----

QknnModel::QknnModel(std::size_t num_features, QknnOptions options)
    : num_features_(num_features), options_(options), z_(z_for_confidence(options.confidence)) {
  if (options_.k == 0 || options_.window == 0) throw std::invalid_argument("QknnModel: K and N must be positive");
  xs_.reserve(options_.window * num_features_);
  ys_.reserve(options_.window);
}

std::size_t QknnModel::slot(std::size_t age_index) const {
  return ys_.size() < options_.window ? age_index : (head_ + age_index) % options_.window;
}

std::vector<std::size_t> QknnModel::neighbours(std::span<const double> x) const {
  check_length(x, num_features_, "QknnModel");
  const std::size_t n = ys_.size();
  std::vector<std::pair<double, std::size_t>> scored(n);
  for (std::size_t a = 0; a < n; ++a) {
    const double* row = xs_.data() + slot(a) * num_features_;
    double d2 = 0.0;
    for (std::size_t j = 0; j < num_features_; ++j) {
      const double diff = row[j] - x[j];
      d2 += diff * diff;
    }
    scored[a] = {d2, a};
  }
  const std::size_t k = std::min(options_.k, n);
  auto closer = [](const auto& l, const auto& r) { return l.first < r.first || (l.first == r.first && l.second > r.second); };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), closer);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<std::pair<std::vector<double>, double>> QknnModel::retained() const {
  std::vector<std::pair<std::vector<double>, double>> out;
  for (std::size_t a = 0; a < ys_.size(); ++a) {
    const double* row = xs_.data() + slot(a) * num_features_;
    out.emplace_back(std::vector<double>(row, row + num_features_), ys_[slot(a)]);
  }
  return out;
}

double QknnModel::predict(std::span<const double> x) const { return predict_interval(x).point; }

PredictionInterval QknnModel::predict_interval(std::span<const double> x) const {
  if (ys_.empty()) throw InsufficientHistory("QknnModel: no observations yet");
  const auto nn = neighbours(x);
  VarianceStats s;
  for (std::size_t a : nn) s.add(ys_[slot(a)]);
  const double sigma = nn.size() >= 2 ? sample_std(s) : sample_std(residuals_);
  return gaussian_interval(s.mean, sigma, z_);
}

void QknnModel::learn_one(std::span<const double> x, double y) {
  check_length(x, num_features_, "QknnModel");
  if (!std::isfinite(y)) throw std::invalid_argument("QknnModel: target must be finite");
  // Residuals only feed the K = 1 fallback, so skip the extra scan otherwise.
  if (options_.k == 1 && !ys_.empty()) residuals_.add(y - predict(x));
  if (ys_.size() < options_.window) {
    xs_.insert(xs_.end(), x.begin(), x.end());
    ys_.push_back(y);
  } else {
    std::copy(x.begin(), x.end(), xs_.begin() + static_cast<std::ptrdiff_t>(head_ * num_features_));
    ys_[head_] = y;
    head_ = (head_ + 1) % options_.window;
  }
}

nlohmann::json QknnModel::checkpoint() const {
  return {{"kind", "qknn"},    {"version", 1},   {"num_features", num_features_},
          {"k", options_.k},   {"window", options_.window}, {"confidence", options_.confidence},
          {"xs", xs_},         {"ys", ys_},      {"head", head_},
          {"residuals", stats_json(residuals_)}};
}

QknnModel QknnModel::restore(const nlohmann::json& j) {
  QknnOptions o;
  o.k = j.at("k").get<std::size_t>();
  o.window = j.at("window").get<std::size_t>();
  o.confidence = j.at("confidence").get<double>();
  QknnModel m(j.at("num_features").get<std::size_t>(), o);
  m.xs_ = j.at("xs").get<std::vector<double>>();
  m.ys_ = j.at("ys").get<std::vector<double>>();
  m.head_ = j.at("head").get<std::size_t>();
  m.residuals_ = stats_from_json(j.at("residuals"));
  if (m.ys_.size() > o.window || m.xs_.size() != m.ys_.size() * m.num_features_ ||
      (m.head_ != 0 && m.head_ >= m.ys_.size()))
    throw std::invalid_argument("QknnModel: inconsistent buffer in snapshot");
  return m;
}

// ---- QarfModel ----

QarfModel::QarfModel(std::size_t num_features, QarfOptions options, std::uint64_t seed)
    : forest_(num_features, options.forest, seed), confidence_(options.confidence), z_(z_for_confidence(options.confidence)) {}

QarfModel::QarfModel(AdaptiveForest forest, double confidence)
    : forest_(std::move(forest)), confidence_(confidence), z_(z_for_confidence(confidence)) {}

double QarfModel::predict(std::span<const double> x) const { return forest_.predict(x); }

PredictionInterval QarfModel::predict_interval(std::span<const double> x) const {
  const auto summary = forest_.summarize(x);
  return gaussian_interval(summary.point, summary.moments.stddev, z_);
}

void QarfModel::learn_one(std::span<const double> x, double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("QarfModel: target must be finite");
  forest_.learn_one(x, y);
}

nlohmann::json QarfModel::checkpoint() const {
  return {{"kind", "qarf"}, {"version", 1}, {"confidence", confidence_}, {"forest", forest_.to_json()}};
}

QarfModel QarfModel::restore(const nlohmann::json& j) {
  return QarfModel(AdaptiveForest::from_json(j.at("forest")), j.at("confidence").get<double>());
}

// ---- Mlp ----

Mlp::Mlp(std::size_t inputs, std::size_t hidden_layers, std::size_t width, std::uint64_t seed) : inputs_(inputs) {
  if (hidden_layers > 0 && width == 0) throw std::invalid_argument("Mlp: hidden width must be positive");
  Rng rng(mix_seed(seed));
  std::size_t fan_in = inputs;
  auto layer = [&](std::size_t out, double gain) {
    const double scale = std::sqrt(gain / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    Eigen::MatrixXd w(out, fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = scale * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out)));
    fan_in = out;
  };
  for (std::size_t l = 0; l < hidden_layers; ++l) layer(width, 2.0);
  layer(1, 1.0);
}

Mlp::Masks Mlp::sample_masks(double dropout, Rng& rng) const {
  Masks m;
  if (dropout <= 0.0) return m;
  const double keep = 1.0 - dropout;
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    Eigen::VectorXd mask(weights_[l].rows());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask(i) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    m.hidden.push_back(std::move(mask));
  }
  return m;
}

double Mlp::forward(std::span<const double> x, const Masks& masks) const {
  if (x.size() != inputs_) throw std::invalid_argument("Mlp: input length mismatch");
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t l = 0; l + 1 < weights_.size(); ++l) {
    a = (weights_[l] * a + biases_[l]).cwiseMax(0.0);
    if (!masks.hidden.empty()) a = a.cwiseProduct(masks.hidden[l]);
  }
  return (weights_.back() * a + biases_.back())(0);
}

double Mlp::loss_and_gradient(std::span<const double> x, double y, const Masks& masks, std::vector<double>& grad) const {
  if (x.size() != inputs_) throw std::invalid_argument("Mlp: input length mismatch");
  const std::size_t hidden = weights_.size() - 1;
  std::vector<Eigen::VectorXd> acts;  // input of each layer
  std::vector<Eigen::VectorXd> pre;   // pre-activation of each hidden layer
  acts.push_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
  for (std::size_t l = 0; l < hidden; ++l) {
    pre.push_back(weights_[l] * acts.back() + biases_[l]);
    Eigen::VectorXd a = pre.back().cwiseMax(0.0);
    if (!masks.hidden.empty()) a = a.cwiseProduct(masks.hidden[l]);
    acts.push_back(std::move(a));
  }
  const double out = (weights_.back() * acts.back() + biases_.back())(0);
  const double err = out - y;

  std::vector<Eigen::MatrixXd> gw(weights_.size());
  std::vector<Eigen::VectorXd> gb(weights_.size());
  Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, err);
  for (std::size_t l = weights_.size(); l-- > 0;) {
    gw[l] = delta * acts[l].transpose();
    gb[l] = delta;
    if (l == 0) break;
    Eigen::VectorXd back = weights_[l].transpose() * delta;
    if (!masks.hidden.empty()) back = back.cwiseProduct(masks.hidden[l - 1]);
    delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  grad.clear();
  grad.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    grad.insert(grad.end(), gw[l].data(), gw[l].data() + gw[l].size());
    grad.insert(grad.end(), gb[l].data(), gb[l].data() + gb[l].size());
  }
  return 0.5 * err * err;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    p.insert(p.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
    p.insert(p.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
  }
  return p;
}

void Mlp::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) throw std::invalid_argument("Mlp: parameter count mismatch");
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    std::copy_n(p.data() + i, weights_[l].size(), weights_[l].data());
    i += static_cast<std::size_t>(weights_[l].size());
    std::copy_n(p.data() + i, biases_[l].size(), biases_[l].data());
    i += static_cast<std::size_t>(biases_[l].size());
  }
}

void Mlp::sgd_step(std::span<const double> grad, double learning_rate) {
  if (grad.size() != parameter_count()) throw std::invalid_argument("Mlp: gradient length mismatch");
  std::size_t i = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (Eigen::Index k = 0; k < weights_[l].size(); ++k) weights_[l].data()[k] -= learning_rate * grad[i++];
    for (Eigen::Index k = 0; k < biases_[l].size(); ++k) biases_[l].data()[k] -= learning_rate * grad[i++];
  }
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    layers.push_back({{"rows", weights_[l].rows()},
                      {"cols", weights_[l].cols()},
                      {"w", std::vector<double>(weights_[l].data(), weights_[l].data() + weights_[l].size())},
                      {"b", std::vector<double>(biases_[l].data(), biases_[l].data() + biases_[l].size())}});
  }
  return {{"inputs", inputs_}, {"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp m;
  m.inputs_ = j.at("inputs").get<std::size_t>();
  std::size_t expect_cols = m.inputs_;
  for (const auto& jl : j.at("layers")) {
    const auto rows = jl.at("rows").get<Eigen::Index>();
    const auto cols = jl.at("cols").get<Eigen::Index>();
    const auto w = jl.at("w").get<std::vector<double>>();
    const auto b = jl.at("b").get<std::vector<double>>();
    if (static_cast<std::size_t>(cols) != expect_cols || w.size() != static_cast<std::size_t>(rows * cols) ||
        b.size() != static_cast<std::size_t>(rows))
      throw std::invalid_argument("Mlp: inconsistent layer shapes in snapshot");
    m.weights_.push_back(Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols));
    m.biases_.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
    expect_cols = static_cast<std::size_t>(rows);
  }
  if (m.weights_.empty() || m.weights_.back().rows() != 1) throw std::invalid_argument("Mlp: bad output layer");
  return m;
}

// ---- McnnModel ----

McnnModel::McnnModel(std::size_t num_features, McnnOptions options, std::uint64_t seed)
    : McnnModel(Mlp(num_features, options.hidden_layers, options.width, derive_seed(seed, 0)), options, seed) {}

McnnModel::McnnModel(Mlp net, McnnOptions options, std::uint64_t seed)
    : options_(options),
      seed_(seed),
      z_(z_for_confidence(options.confidence)),
      net_(std::move(net)),
      train_rng_(derive_seed(seed, 1)) {
  if (options_.mc_passes < 2) throw std::invalid_argument("McnnModel: need at least two Monte Carlo passes");
  if (!(options_.dropout >= 0.0 && options_.dropout < 1.0))
    throw std::invalid_argument("McnnModel: dropout must lie in [0, 1)");
  if (!(options_.learning_rate >= 0.0)) throw std::invalid_argument("McnnModel: learning rate must be non-negative");
  if (options_.residual_window == 0) throw std::invalid_argument("McnnModel: residual window must be positive");
  if (!(options_.max_grad_norm >= 0.0)) throw std::invalid_argument("McnnModel: max_grad_norm must be non-negative");
}

double McnnModel::predict(std::span<const double> x) const {
  if (updates_ == 0) throw InsufficientHistory("McnnModel: no training step taken yet");
  return net_.forward(x);
}

double McnnModel::epistemic_variance(std::span<const double> x) const {
  if (options_.dropout <= 0.0) return 0.0;
  // Seeded by the update count so that predicting leaves the model untouched
  // and repeated queries agree.
  Rng rng(derive_seed(seed_, 2 + updates_));
  VarianceStats s;
  for (std::size_t b = 0; b < options_.mc_passes; ++b) s.add(net_.forward(x, net_.sample_masks(options_.dropout, rng)));
  return s.variance();
}

double McnnModel::aleatoric_variance() const {
  if (residuals_.empty()) return 0.0;
  return std::accumulate(residuals_.begin(), residuals_.end(), 0.0) / static_cast<double>(residuals_.size());
}

PredictionInterval McnnModel::predict_interval(std::span<const double> x) const {
  const double point = predict(x);
  const double sigma = std::sqrt(epistemic_variance(x) + aleatoric_variance());
  return gaussian_interval(point, sigma, z_);
}

void McnnModel::learn_one(std::span<const double> x, double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("McnnModel: target must be finite");
  const double point = net_.forward(x);
  const double r2 = (y - point) * (y - point);
  if (residuals_.size() < options_.residual_window) {
    residuals_.push_back(r2);
  } else {
    residuals_[residual_head_] = r2;
    residual_head_ = (residual_head_ + 1) % options_.residual_window;
  }
  std::vector<double> grad;
  const double loss = net_.loss_and_gradient(x, y, net_.sample_masks(options_.dropout, train_rng_), grad);
  if (!std::isfinite(loss)) throw std::domain_error("McnnModel: non-finite loss (learning rate too large)");
  if (options_.max_grad_norm > 0.0) {
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    const double norm = std::sqrt(norm2);
    if (norm > options_.max_grad_norm) {
      for (double& g : grad) g *= options_.max_grad_norm / norm;
    }
  }
  net_.sgd_step(grad, options_.learning_rate);
  ++updates_;
}

nlohmann::json McnnModel::checkpoint() const {
  std::ostringstream rng_state;
  rng_state << train_rng_.engine();
  return {{"kind", "mcnn"},
          {"version", 1},
          {"seed", seed_},
          {"hidden_layers", options_.hidden_layers},
          {"width", options_.width},
          {"dropout", options_.dropout},
          {"mc_passes", options_.mc_passes},
          {"learning_rate", options_.learning_rate},
          {"residual_window", options_.residual_window},
          {"max_grad_norm", options_.max_grad_norm},
          {"confidence", options_.confidence},
          {"network", net_.to_json()},
          {"rng", rng_state.str()},
          {"updates", updates_},
          {"residuals", residuals_},
          {"residual_head", residual_head_}};
}

McnnModel McnnModel::restore(const nlohmann::json& j) {
  McnnOptions o;
  o.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  o.width = j.at("width").get<std::size_t>();
  o.dropout = j.at("dropout").get<double>();
  o.mc_passes = j.at("mc_passes").get<std::size_t>();
  o.learning_rate = j.at("learning_rate").get<double>();
  o.residual_window = j.at("residual_window").get<std::size_t>();
  o.max_grad_norm = j.at("max_grad_norm").get<double>();
  o.confidence = j.at("confidence").get<double>();
  McnnModel m(Mlp::from_json(j.at("network")), o, j.at("seed").get<std::uint64_t>());
  std::istringstream rng_state(j.at("rng").get<std::string>());
  rng_state >> m.train_rng_.engine();
  m.updates_ = j.at("updates").get<std::uint64_t>();
  m.residuals_ = j.at("residuals").get<std::vector<double>>();
  m.residual_head_ = j.at("residual_head").get<std::size_t>();
  if (m.residuals_.size() > o.residual_window) throw std::invalid_argument("McnnModel: residual ring too long");
  return m;
}

// ---- ScaledTarget ----

ScaledTarget::ScaledTarget(std::unique_ptr<OnlineRegressor> inner) : inner_(std::move(inner)) {
  if (!inner_) throw std::invalid_argument("ScaledTarget: null model");
}

ScaledTarget::ScaledTarget(const ScaledTarget& other) : inner_(other.inner_->clone()), stats_(other.stats_) {}

double ScaledTarget::scale() const {
  const double s = sample_std(stats_);
  return s < kMinScale ? 1.0 : s;
}

double ScaledTarget::predict(std::span<const double> x) const { return inner_->predict(x) * scale() + shift(); }

PredictionInterval ScaledTarget::predict_interval(std::span<const double> x) const {
  const double s = scale();
  const double m = shift();
  PredictionInterval pi = inner_->predict_interval(x);
  pi.point = pi.point * s + m;
  pi.lower = pi.lower * s + m;
  pi.upper = pi.upper * s + m;
  if (pi.sigma) *pi.sigma *= s;
  return pi;
}

void ScaledTarget::learn_one(std::span<const double> x, double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("ScaledTarget: target must be finite");
  stats_.add(y);
  inner_->learn_one(x, (y - shift()) / scale());
}

nlohmann::json ScaledTarget::checkpoint() const {
  return {{"kind", "scaled"}, {"version", 1}, {"stats", stats_json(stats_)}, {"inner", inner_->checkpoint()}};
}

// ---- factory ----

const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> kinds{"baseline", "qr", "qknn", "qarf", "mcnn"};
  return kinds;
}

namespace {

class ParamReader {
 public:
  explicit ParamReader(const nlohmann::json& params) : params_(params) {
    if (!params_.is_object()) throw ConfigError("params", "must be an object");
  }

  double number(const std::string& name, double fallback, double lo, double hi) {
    seen_.push_back(name);
    if (!params_.contains(name)) return fallback;
    const auto& v = params_.at(name);
    if (!v.is_number()) throw ConfigError("params." + name, "expected a number");
    const double d = v.get<double>();
    if (!(d >= lo && d <= hi)) throw ConfigError("params." + name, "out of range");
    return d;
  }

  std::size_t count(const std::string& name, std::size_t fallback, std::size_t lo, std::size_t hi) {
    seen_.push_back(name);
    if (!params_.contains(name)) return fallback;
    const auto& v = params_.at(name);
    if (!v.is_number_integer()) throw ConfigError("params." + name, "expected an integer");
    const auto i = v.get<std::int64_t>();
    if (i < static_cast<std::int64_t>(lo) || i > static_cast<std::int64_t>(hi))
      throw ConfigError("params." + name, "out of range");
    return static_cast<std::size_t>(i);
  }

  bool flag(const std::string& name, bool fallback) {
    seen_.push_back(name);
    if (!params_.contains(name)) return fallback;
    const auto& v = params_.at(name);
    if (!v.is_boolean()) throw ConfigError("params." + name, "expected true or false");
    return v.get<bool>();
  }

  void finish() const {
    for (const auto& [key, value] : params_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end())
        throw ConfigError("params." + key, "unknown parameter");
    }
  }

 private:
  const nlohmann::json& params_;
  std::vector<std::string> seen_;
};

constexpr double kHuge = 1e12;

}  // namespace

std::unique_ptr<OnlineRegressor> make_model(const ModelSpec& spec, std::size_t num_features, double confidence) {
  ParamReader p(spec.params);
  std::unique_ptr<OnlineRegressor> model;
  bool scale = false;
  if (spec.kind == "baseline") {
    model = std::make_unique<MeanBaseline>(num_features, confidence);
  } else if (spec.kind == "qr") {
    QrOptions o;
    o.learning_rate = p.number("eta", o.learning_rate, 0.0, kHuge);
    o.regularization = p.number("lambda", o.regularization, 0.0, kHuge);
    o.confidence = confidence;
    scale = p.flag("scale_target", true);
    model = std::make_unique<QrModel>(num_features, o);
  } else if (spec.kind == "qknn") {
    QknnOptions o;
    o.k = p.count("k", o.k, 1, 1'000'000);
    o.window = p.count("n", o.window, 1, 10'000'000);
    o.confidence = confidence;
    model = std::make_unique<QknnModel>(num_features, o);
  } else if (spec.kind == "qarf") {
    QarfOptions o;
    auto& f = o.forest;
    f.n_trees = p.count("n_trees", f.n_trees, 1, 10'000);
    f.lambda = p.number("lambda_bag", f.lambda, 0.0, 1e3);
    f.drift_detection = p.flag("drift_detection", f.drift_detection);
    f.warning_delta = p.number("warning_delta", f.warning_delta, 1e-300, 0.999999);
    f.drift_delta = p.number("drift_delta", f.drift_delta, 1e-300, 0.999999);
    f.tree.grace_period = static_cast<std::uint32_t>(p.count("grace_period", f.tree.grace_period, 1, 1'000'000));
    f.tree.split_confidence = p.number("split_confidence", f.tree.split_confidence, 1e-300, 0.999999);
    f.tree.tie_threshold = p.number("tie_threshold", f.tree.tie_threshold, 0.0, kHuge);
    f.tree.num_bins = static_cast<std::uint32_t>(p.count("num_bins", f.tree.num_bins, 2, 10'000));
    f.tree.max_depth = static_cast<std::uint32_t>(p.count("max_depth", f.tree.max_depth, 0, 1'000));
    f.tree.sketch_k = static_cast<std::uint32_t>(p.count("sketch_k", f.tree.sketch_k, KllSketch::kMinK, 1'000'000));
    f.tree.subspace_size = static_cast<std::uint32_t>(p.count("subspace_size", f.tree.subspace_size, 0, 1'000'000));
    o.confidence = confidence;
    model = std::make_unique<QarfModel>(num_features, o, spec.seed);
  } else if (spec.kind == "mcnn") {
    McnnOptions o;
    o.hidden_layers = p.count("hidden_layers", o.hidden_layers, 0, 16);
    o.width = p.count("width", o.width, 1, 4096);
    o.dropout = p.number("dropout", o.dropout, 0.0, 0.99);
    o.mc_passes = p.count("mc_passes", o.mc_passes, 2, 100'000);
    o.learning_rate = p.number("learning_rate", o.learning_rate, 0.0, kHuge);
    o.residual_window = p.count("residual_window", o.residual_window, 1, 100'000);
    o.max_grad_norm = p.number("max_grad_norm", o.max_grad_norm, 0.0, kHuge);
    o.confidence = confidence;
    scale = p.flag("scale_target", true);
    model = std::make_unique<McnnModel>(num_features, o, spec.seed);
  } else {
    throw ConfigError("kind", "unknown model kind '" + spec.kind + "'");
  }
  p.finish();
  if (scale) return std::make_unique<ScaledTarget>(std::move(model));
  return model;
}

std::unique_ptr<OnlineRegressor> load_model(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("load_model: unsupported checkpoint version");
  if (kind == "baseline") return std::make_unique<MeanBaseline>(MeanBaseline::restore(j));
  if (kind == "qr") return std::make_unique<QrModel>(QrModel::restore(j));
  if (kind == "qknn") return std::make_unique<QknnModel>(QknnModel::restore(j));
  if (kind == "qarf") return std::make_unique<QarfModel>(QarfModel::restore(j));
  if (kind == "mcnn") return std::make_unique<McnnModel>(McnnModel::restore(j));
  if (kind == "scaled") {
    auto out = std::make_unique<ScaledTarget>(load_model(j.at("inner")));
    out->stats_ = stats_from_json(j.at("stats"));
    return out;
  }
  throw std::invalid_argument("load_model: unknown model kind '" + kind + "'");
}

}  // namespace firstdrive
