#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "firstdrive/adaptive_forest.hpp"
#include "firstdrive/hoeffding_tree.hpp"
#include "firstdrive/rng.hpp"

namespace firstdrive {

struct PredictionInterval {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> sigma;  // absent for quantile regression
};

// Two-sided standard-normal quantile for the given central coverage
// (0.90 -> 1.6449). Throws std::invalid_argument outside (0, 1).
double z_for_confidence(double confidence);

// Tilted absolute loss. Throws std::invalid_argument unless 0 < tau < 1.
double pinball_loss(double y, double yhat, double tau);

// predict / predict_interval never change state; learn_one costs O(1) in the
// length of the stream. Intervals throw InsufficientHistory when the model
// cannot produce one yet.
class OnlineRegressor {
 public:
  virtual ~OnlineRegressor() = default;
  virtual std::size_t num_features() const = 0;
  virtual double predict(std::span<const double> x) const = 0;
  virtual PredictionInterval predict_interval(std::span<const double> x) const = 0;
  virtual void learn_one(std::span<const double> x, double y) = 0;
  virtual std::unique_ptr<OnlineRegressor> clone() const = 0;
  virtual std::string kind() const = 0;
  virtual nlohmann::json checkpoint() const = 0;
};

// Historical mean of the targets; interval is mean +- z * sample std.
class MeanBaseline final : public OnlineRegressor {
 public:
  explicit MeanBaseline(std::size_t num_features = 0, double confidence = 0.90);

  std::size_t num_features() const override { return num_features_; }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  void learn(double y);
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<MeanBaseline>(*this); }
  std::string kind() const override { return "baseline"; }
  nlohmann::json checkpoint() const override;
  static MeanBaseline restore(const nlohmann::json& j);

  double mean() const { return stats_.mean; }
  std::uint64_t count() const { return static_cast<std::uint64_t>(stats_.weight); }

 private:
  std::size_t num_features_;
  double confidence_;
  double z_;
  VarianceStats stats_;
};

struct QrOptions {
  double learning_rate = 0.01;
  double regularization = 1e-4;
  double confidence = 0.90;
};

// Three linear quantile regressors (tau = (1-c)/2, 0.5, (1+c)/2) trained by SGD
// on the pinball loss plus lambda * theta'theta. Weight vectors hold the
// intercept at index 0.
class QrModel final : public OnlineRegressor {
 public:
  explicit QrModel(std::size_t num_features, QrOptions options = {});

  std::size_t num_features() const override { return num_features_; }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<QrModel>(*this); }
  std::string kind() const override { return "qr"; }
  nlohmann::json checkpoint() const override;
  static QrModel restore(const nlohmann::json& j);

  const std::vector<double>& theta(std::size_t q) const { return theta_.at(q); }
  std::vector<double>& theta(std::size_t q) { return theta_.at(q); }
  double tau(std::size_t q) const { return taus_.at(q); }
  const QrOptions& options() const { return options_; }

  // Objective of one quantile on one example and the subgradient used by
  // learn_one, both with respect to theta (intercept first).
  static double objective(std::span<const double> theta, std::span<const double> x, double y, double tau,
                          double regularization);
  static std::vector<double> gradient(std::span<const double> theta, std::span<const double> x, double y, double tau,
                                      double regularization);

 private:
  std::size_t num_features_;
  QrOptions options_;
  std::vector<double> taus_;
  std::vector<std::vector<double>> theta_;
};

struct QknnOptions {
  std::size_t k = 10;
  std::size_t window = 300;  // N latest observations kept
  double confidence = 0.90;
};

// K nearest neighbours over a FIFO window of the N latest observations.
// Distance ties go to the more recent observation.
class QknnModel final : public OnlineRegressor {
 public:
  explicit QknnModel(std::size_t num_features, QknnOptions options = {});

  std::size_t num_features() const override { return num_features_; }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<QknnModel>(*this); }
  std::string kind() const override { return "qknn"; }
  nlohmann::json checkpoint() const override;
  static QknnModel restore(const nlohmann::json& j);

  std::size_t size() const { return ys_.size(); }
  const QknnOptions& options() const { return options_; }
  // Buffer positions (oldest first) of the neighbours of x, nearest first.
  std::vector<std::size_t> neighbours(std::span<const double> x) const;
  // Retained (x, y) in arrival order, oldest first.
  std::vector<std::pair<std::vector<double>, double>> retained() const;

 private:
  std::size_t slot(std::size_t age_index) const;

  std::size_t num_features_;
  QknnOptions options_;
  double z_;
  std::vector<double> xs_;  // row-major ring storage
  std::vector<double> ys_;
  std::size_t head_ = 0;    // slot of the oldest element once full
  VarianceStats residuals_;
};

struct QarfOptions {
  ForestOptions forest{};
  double confidence = 0.90;
};

// Adaptive random forest; sigma from a Gaussian fit to the merged leaf sketches.
class QarfModel final : public OnlineRegressor {
 public:
  QarfModel(std::size_t num_features, QarfOptions options = {}, std::uint64_t seed = 0);

  std::size_t num_features() const override { return forest_.num_features(); }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<QarfModel>(*this); }
  std::string kind() const override { return "qarf"; }
  nlohmann::json checkpoint() const override;
  static QarfModel restore(const nlohmann::json& j);

  const AdaptiveForest& forest() const { return forest_; }

 private:
  QarfModel(AdaptiveForest forest, double confidence);

  AdaptiveForest forest_;
  double confidence_;
  double z_;
};

// Fully connected ReLU network with one linear output and inverted dropout on
// every hidden layer.
class Mlp {
 public:
  Mlp(std::size_t inputs, std::size_t hidden_layers, std::size_t width, std::uint64_t seed);

  struct Masks {
    std::vector<Eigen::VectorXd> hidden;  // one per hidden layer; empty = no dropout
  };
  Masks sample_masks(double dropout, Rng& rng) const;

  double forward(std::span<const double> x, const Masks& masks = {}) const;
  // Loss 0.5 (f(x) - y)^2 and its gradient for every parameter, flattened in
  // parameters() order.
  double loss_and_gradient(std::span<const double> x, double y, const Masks& masks, std::vector<double>& grad) const;

  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);
  std::size_t parameter_count() const;
  void sgd_step(std::span<const double> grad, double learning_rate);

  std::size_t inputs() const { return inputs_; }
  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

 private:
  Mlp() = default;
  std::size_t inputs_ = 0;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct McnnOptions {
  std::size_t hidden_layers = 1;
  std::size_t width = 32;
  double dropout = 0.1;
  std::size_t mc_passes = 50;
  double learning_rate = 0.01;
  std::size_t residual_window = 10;
  // SGD steps rescale the gradient to at most this L2 norm; 0 disables.
  double max_grad_norm = 5.0;
  double confidence = 0.90;
};

// Monte Carlo dropout network. The point is a deterministic pass; sigma
// combines the spread of `mc_passes` stochastic passes with the mean squared
// residual of the latest predictions.
class McnnModel final : public OnlineRegressor {
 public:
  McnnModel(std::size_t num_features, McnnOptions options = {}, std::uint64_t seed = 0);

  std::size_t num_features() const override { return net_.inputs(); }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<McnnModel>(*this); }
  std::string kind() const override { return "mcnn"; }
  nlohmann::json checkpoint() const override;
  static McnnModel restore(const nlohmann::json& j);

  const Mlp& network() const { return net_; }
  Mlp& network() { return net_; }
  std::uint64_t updates() const { return updates_; }
  std::size_t residual_count() const { return residuals_.size(); }
  double epistemic_variance(std::span<const double> x) const;
  double aleatoric_variance() const;

 private:
  McnnModel(Mlp net, McnnOptions options, std::uint64_t seed);

  McnnOptions options_;
  std::uint64_t seed_;
  double z_;
  Mlp net_;
  Rng train_rng_;
  std::uint64_t updates_ = 0;
  std::vector<double> residuals_;  // ring of squared residuals
  std::size_t residual_head_ = 0;
};

// Trains the wrapped model on (y - mean) / std of the targets seen so far
// (current one included) and maps predictions back to natural units.
class ScaledTarget final : public OnlineRegressor {
 public:
  explicit ScaledTarget(std::unique_ptr<OnlineRegressor> inner);
  ScaledTarget(const ScaledTarget& other);

  std::size_t num_features() const override { return inner_->num_features(); }
  double predict(std::span<const double> x) const override;
  PredictionInterval predict_interval(std::span<const double> x) const override;
  void learn_one(std::span<const double> x, double y) override;
  std::unique_ptr<OnlineRegressor> clone() const override { return std::make_unique<ScaledTarget>(*this); }
  std::string kind() const override { return inner_->kind(); }
  nlohmann::json checkpoint() const override;

  const OnlineRegressor& inner() const { return *inner_; }
  double scale() const;
  double shift() const { return stats_.mean; }

 private:
  friend std::unique_ptr<OnlineRegressor> load_model(const nlohmann::json& j);
  std::unique_ptr<OnlineRegressor> inner_;
  VarianceStats stats_;
};

// Model kind, hyperparameters and seed as read from a run configuration.
struct ModelSpec {
  std::string kind;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
};

const std::vector<std::string>& model_kinds();

// Builds a fresh model. QR and MCNN are wrapped in ScaledTarget unless
// params.scale_target is false. Throws ConfigError naming the offending
// parameter ("params.eta", ...).
std::unique_ptr<OnlineRegressor> make_model(const ModelSpec& spec, std::size_t num_features,
                                            double confidence = 0.90);

std::unique_ptr<OnlineRegressor> load_model(const nlohmann::json& checkpoint);

}  // namespace firstdrive
