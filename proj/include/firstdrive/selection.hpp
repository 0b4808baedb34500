#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "firstdrive/evaluation.hpp"
#include "firstdrive/features.hpp"

namespace firstdrive {

// ---- Hopkins / well-behaving vehicles ----

struct HopkinsResult {
  double statistic = 0.0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
};

// min(0.1 n, 100), at least 1.
std::size_t default_hopkins_m(std::size_t n);

// Points are min-max scaled to [0, 1]^2 first; a dimension with zero range maps
// to 0.5 (and uniform probes use 0.5 there too). Throws std::invalid_argument
// when m == 0 or n < 2m. All-identical points give H = 1.
HopkinsResult hopkins_statistic(std::span<const std::array<double, 2>> points, std::size_t m, std::uint64_t seed);

struct VehicleTargets {
  std::string vehicle_id;
  std::vector<std::array<double, 2>> points;  // (departure h, distance km) per example
};

struct WellBehavingSelection {
  std::vector<std::pair<std::string, double>> ranking;  // every vehicle, H descending
  std::vector<std::string> selected;
  std::vector<std::string> tuning;  // vehicle-id order
  std::vector<std::string> test;    // vehicle-id order
  bool fleet_smaller_than_request = false;
};

// Vehicles with fewer than two examples get H = 0. Ties in H keep input order.
WellBehavingSelection select_well_behaving(std::span<const VehicleTargets> fleet, std::size_t n_select = 100,
                                           double split = 0.8, std::uint64_t seed = 0);

// ---- correlation screening ----

// Pearson r; 0 when either side has zero variance. Throws std::invalid_argument
// on length mismatch.
double pearson(std::span<const double> x, std::span<const double> y);

struct VehicleMatrix {
  std::string vehicle_id;
  Eigen::MatrixXd x;  // rows = examples in stream order, columns = encoded dims
  Eigen::VectorXd y;
};

VehicleMatrix to_matrix(const std::string& vehicle_id, std::span<const Observation> stream);

struct PearsonScreen {
  std::vector<double> column_r;  // per encoded column, averaged over vehicles
  std::vector<std::pair<std::string, double>> descriptor_r;  // max |avg r| over the descriptor's columns
  std::vector<std::string> flagged;                          // |r| below the threshold
};

// Vehicles with fewer than two rows are skipped.
PearsonScreen pearson_screen(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema,
                             double threshold = 0.02);

// ---- sequential selection ----

// Lower is better. Receives descriptor names in schema order.
using SubsetScorer = std::function<double(const std::vector<std::string>& descriptors)>;

struct FeatureSubset {
  std::vector<std::string> names;  // schema order
  double mae = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, double>> steps;  // descriptor added/removed and score after
};

// Greedy forward selection over `candidates` until `max_features` are chosen
// or the candidates run out. Ties go to the earlier candidate.
FeatureSubset forward_sfs(const std::vector<std::string>& candidates, const SubsetScorer& score,
                          std::size_t max_features);

// Starts from `start` and removes the descriptor whose removal lowers the score
// most, while that lowers it. Never removes the last descriptor.
FeatureSubset backward_sfs(const std::vector<std::string>& start, const SubsetScorer& score);

// Batch least squares (with intercept) per vehicle, fitted on the first 70 % of
// its rows in time order and scored by pooled MAE on the rest.
SubsetScorer batch_least_squares_scorer(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema,
                                        double train_fraction = 0.7);

struct ForestScorerOptions {
  std::size_t epochs = 2;
  std::size_t n_trees = 3;
  std::size_t max_vehicles = 20;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};
// Multi-epoch passes of the online forest (no drift detection) over the same
// chronological split, standing in for a batch random forest.
SubsetScorer forest_scorer(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema,
                           ForestScorerOptions options = {});

// Progressive-validation aggregate MAE (warm-up excluded) of a model over the
// given pre-encoded streams restricted to the descriptor columns. A model that
// diverges scores +infinity.
SubsetScorer progressive_scorer(const ModelSpec& spec,
                                std::span<const std::pair<std::string, std::vector<Observation>>> streams,
                                const FeatureSchema& schema, double confidence = 0.90,
                                const ValidationOptions& options = {});

// Descriptors to drop after the screen: flagged by the correlation screen and
// absent from every forward-selected subset (`union_rule` = flagged or absent).
std::vector<std::string> removal_set(const std::vector<std::string>& all, const std::vector<std::string>& flagged,
                                     const std::vector<std::vector<std::string>>& favored, bool union_rule = false);

// ---- multicollinearity ----

// VIF of every column of x (least squares on the other columns plus an
// intercept). A column in the span of the others (or constant) gets +infinity.
std::vector<double> vif_scores(const Eigen::MatrixXd& x);

struct VifResult {
  std::vector<std::string> retained;
  std::vector<std::string> dropped;  // in removal order
  std::vector<std::pair<std::string, double>> final_vif;
};

// Drops the group with the highest VIF (max over its columns) while it exceeds
// `threshold`; ties go to the earlier group. `groups[i]` lists the columns of
// `names[i]`; empty `groups` means one column per name.
VifResult vif_prune(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                    std::vector<std::vector<std::size_t>> groups = {}, double threshold = 10.0);

// ---- grid search ----

// Cartesian product of {"axis": [values...]} in key order, first key slowest.
std::vector<nlohmann::json> expand_grid(const nlohmann::json& axes);

struct GridResult {
  nlohmann::json best;
  double best_mae = std::numeric_limits<double>::infinity();
  std::vector<std::pair<nlohmann::json, double>> evaluated;
};

// Evaluates every combination in order; strict improvement wins, so ties keep
// the earliest. Throws std::invalid_argument for an empty grid.
GridResult grid_search(const std::vector<nlohmann::json>& grid,
                       const std::function<double(const nlohmann::json&)>& score);

}  // namespace firstdrive
