#include "firstdrive/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "firstdrive/adaptive_forest.hpp"
#include "firstdrive/rng.hpp"

namespace firstdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Partial Fisher-Yates: m distinct indices from [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(cols[c]));
  return out;
}

std::size_t train_rows(Eigen::Index rows, double fraction) {
  const auto n = static_cast<std::size_t>(rows);
  auto t = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  return std::min(t, n);
}

}  // namespace

std::size_t default_hopkins_m(std::size_t n) { return std::max<std::size_t>(1, std::min<std::size_t>(n / 10, 100)); }

HopkinsResult hopkins_statistic(std::span<const std::array<double, 2>> points, std::size_t m, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (m == 0) throw std::invalid_argument("hopkins: m must be positive");
  if (n < 2 * m) throw std::invalid_argument("hopkins: need at least 2m points");

  std::array<double, 2> lo{points[0][0], points[0][1]};
  std::array<double, 2> hi = lo;
  for (const auto& p : points) {
    for (int k = 0; k < 2; ++k) {
      lo[k] = std::min(lo[k], p[k]);
      hi[k] = std::max(hi[k], p[k]);
    }
  }
  std::vector<std::array<double, 2>> scaled(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 2; ++k) {
      const double range = hi[k] - lo[k];
      scaled[i][k] = range > 0.0 ? (points[i][k] - lo[k]) / range : 0.5;
    }
  }

  auto nearest = [&](const std::array<double, 2>& q, std::size_t skip) {
    double best = kInf;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == skip) continue;
      best = std::min(best, std::hypot(scaled[i][0] - q[0], scaled[i][1] - q[1]));
    }
    return best;
  };

  Rng rng(seed);
  double sum_u = 0.0;
  for (std::size_t i : sample_indices(n, m, rng)) sum_u += nearest(scaled[i], i);
  double sum_w = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::array<double, 2> probe{};
    for (int k = 0; k < 2; ++k) {
      const double u = rng.uniform();
      probe[k] = hi[k] > lo[k] ? u : 0.5;
    }
    sum_w += nearest(probe, n);
  }
  const double denom = sum_u + sum_w;
  return {denom > 0.0 ? sum_w / denom : 1.0, m, seed};
}

WellBehavingSelection select_well_behaving(std::span<const VehicleTargets> fleet, std::size_t n_select, double split,
                                           std::uint64_t seed) {
  if (split < 0.0 || split > 1.0) throw std::invalid_argument("select_well_behaving: split must be in [0, 1]");
  WellBehavingSelection out;
  out.ranking.reserve(fleet.size());
  for (std::size_t v = 0; v < fleet.size(); ++v) {
    const auto& pts = fleet[v].points;
    double h = 0.0;
    if (pts.size() >= 2) h = hopkins_statistic(pts, default_hopkins_m(pts.size()), derive_seed(seed, v + 1)).statistic;
    out.ranking.emplace_back(fleet[v].vehicle_id, h);
  }
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  out.fleet_smaller_than_request = fleet.size() < n_select;
  const std::size_t k = std::min(n_select, fleet.size());
  for (std::size_t i = 0; i < k; ++i) out.selected.push_back(out.ranking[i].first);

  std::vector<std::string> shuffled = out.selected;
  Rng rng(derive_seed(seed, 0));
  for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
  const auto n_tune = static_cast<std::size_t>(std::llround(split * static_cast<double>(k)));
  out.tuning.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_tune));
  out.test.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_tune), shuffled.end());
  std::sort(out.tuning.begin(), out.tuning.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Relative guard: a column that is constant up to rounding has no correlation.
  if (sxx <= 1e-24 * static_cast<double>(n) || syy <= 1e-24 * static_cast<double>(n)) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

VehicleMatrix to_matrix(const std::string& vehicle_id, std::span<const Observation> stream) {
  VehicleMatrix m;
  m.vehicle_id = vehicle_id;
  const std::size_t d = stream.empty() ? 0 : stream.front().x.size();
  m.x.resize(static_cast<Eigen::Index>(stream.size()), static_cast<Eigen::Index>(d));
  m.y.resize(static_cast<Eigen::Index>(stream.size()));
  for (std::size_t r = 0; r < stream.size(); ++r) {
    if (stream[r].x.size() != d) throw std::invalid_argument("to_matrix: ragged stream");
    for (std::size_t c = 0; c < d; ++c) m.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = stream[r].x[c];
    m.y(static_cast<Eigen::Index>(r)) = stream[r].y;
  }
  return m;
}

PearsonScreen pearson_screen(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema, double threshold) {
  const std::size_t d = schema.encoded_length();
  PearsonScreen out;
  out.column_r.assign(d, 0.0);
  std::size_t used = 0;
  for (const auto& v : vehicles) {
    if (v.x.rows() < 2) continue;
    if (static_cast<std::size_t>(v.x.cols()) != d) throw std::invalid_argument("pearson_screen: width mismatch");
    ++used;
    for (std::size_t c = 0; c < d; ++c) {
      const Eigen::VectorXd col = v.x.col(static_cast<Eigen::Index>(c));
      out.column_r[c] += pearson(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                 std::span<const double>(v.y.data(), static_cast<std::size_t>(v.y.size())));
    }
  }
  if (used > 0)
    for (double& r : out.column_r) r /= static_cast<double>(used);

  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& desc = schema.descriptors()[i];
    double best = 0.0;
    for (std::size_t c = schema.offset(i); c < schema.offset(i) + desc.width(); ++c) best = std::max(best, std::abs(out.column_r[c]));
    out.descriptor_r.emplace_back(desc.name, best);
    if (best < threshold) out.flagged.push_back(desc.name);
  }
  return out;
}

FeatureSubset forward_sfs(const std::vector<std::string>& candidates, const SubsetScorer& score,
                          std::size_t max_features) {
  FeatureSubset out;
  std::vector<std::string> remaining = candidates;
  std::vector<std::string> chosen;
  while (chosen.size() < max_features && !remaining.empty()) {
    double best = kInf;
    std::size_t best_i = remaining.size();
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      std::vector<std::string> trial = chosen;
      trial.push_back(remaining[i]);
      const double s = score(trial);
      if (best_i == remaining.size() || s < best) {
        best = s;
        best_i = i;
      }
    }
    chosen.push_back(remaining[best_i]);
    out.steps.emplace_back(remaining[best_i], best);
    out.mae = best;
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_i));
  }
  // Report in candidate order.
  for (const auto& c : candidates)
    if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) out.names.push_back(c);
  return out;
}

FeatureSubset backward_sfs(const std::vector<std::string>& start, const SubsetScorer& score) {
  FeatureSubset out;
  out.names = start;
  out.mae = score(out.names);
  while (out.names.size() > 1) {
    double best = kInf;
    std::size_t best_i = out.names.size();
    for (std::size_t i = 0; i < out.names.size(); ++i) {
      std::vector<std::string> trial = out.names;
      trial.erase(trial.begin() + static_cast<std::ptrdiff_t>(i));
      const double s = score(trial);
      if (s < best) {
        best = s;
        best_i = i;
      }
    }
    if (best_i == out.names.size() || !(best < out.mae)) break;
    out.steps.emplace_back(out.names[best_i], best);
    out.names.erase(out.names.begin() + static_cast<std::ptrdiff_t>(best_i));
    out.mae = best;
  }
  return out;
}

SubsetScorer batch_least_squares_scorer(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema,
                                        double train_fraction) {
  return [vehicles, schema, train_fraction](const std::vector<std::string>& names) {
    const auto cols = schema.columns_of(names);
    double abs_sum = 0.0;
    std::size_t count = 0;
    for (const auto& v : vehicles) {
      const std::size_t n_train = train_rows(v.x.rows(), train_fraction);
      const auto n = static_cast<std::size_t>(v.x.rows());
      if (n_train == 0 || n_train == n) continue;
      const Eigen::MatrixXd sub = select_columns(v.x, cols);
      Eigen::MatrixXd design(static_cast<Eigen::Index>(n), sub.cols() + 1);
      design.col(0).setOnes();
      design.rightCols(sub.cols()) = sub;
      const auto nt = static_cast<Eigen::Index>(n_train);
      const Eigen::VectorXd beta = design.topRows(nt).colPivHouseholderQr().solve(v.y.head(nt));
      const Eigen::VectorXd pred = design.bottomRows(static_cast<Eigen::Index>(n) - nt) * beta;
      abs_sum += (pred - v.y.tail(static_cast<Eigen::Index>(n) - nt)).cwiseAbs().sum();
      count += n - n_train;
    }
    return count == 0 ? kInf : abs_sum / static_cast<double>(count);
  };
}

SubsetScorer forest_scorer(std::span<const VehicleMatrix> vehicles, const FeatureSchema& schema,
                           ForestScorerOptions options) {
  return [vehicles, schema, options](const std::vector<std::string>& names) {
    const auto cols = schema.columns_of(names);
    if (cols.empty()) return kInf;
    double abs_sum = 0.0;
    std::size_t count = 0;
    const std::size_t used = std::min(options.max_vehicles, vehicles.size());
    std::vector<double> row(cols.size());
    auto fill = [&](const VehicleMatrix& v, Eigen::Index r) {
      for (std::size_t c = 0; c < cols.size(); ++c) row[c] = v.x(r, static_cast<Eigen::Index>(cols[c]));
    };
    for (std::size_t vi = 0; vi < used; ++vi) {
      const auto& v = vehicles[vi];
      const std::size_t n_train = train_rows(v.x.rows(), options.train_fraction);
      const auto n = static_cast<std::size_t>(v.x.rows());
      if (n_train == 0 || n_train == n) continue;
      ForestOptions fo;
      fo.n_trees = options.n_trees;
      fo.lambda = 1.0;
      fo.drift_detection = false;
      AdaptiveForest forest(cols.size(), fo, derive_seed(options.seed, vi));
      for (std::size_t e = 0; e < options.epochs; ++e) {
        for (std::size_t r = 0; r < n_train; ++r) {
          fill(v, static_cast<Eigen::Index>(r));
          forest.learn_one(row, v.y(static_cast<Eigen::Index>(r)));
        }
      }
      for (std::size_t r = n_train; r < n; ++r) {
        fill(v, static_cast<Eigen::Index>(r));
        abs_sum += std::abs(forest.predict(row) - v.y(static_cast<Eigen::Index>(r)));
        ++count;
      }
    }
    return count == 0 ? kInf : abs_sum / static_cast<double>(count);
  };
}

SubsetScorer progressive_scorer(const ModelSpec& spec,
                                std::span<const std::pair<std::string, std::vector<Observation>>> streams,
                                const FeatureSchema& schema, double confidence, const ValidationOptions& options) {
  return [spec, streams, schema, confidence, options](const std::vector<std::string>& names) {
    const auto cols = schema.columns_of(names);
    std::vector<std::pair<std::string, std::vector<Observation>>> narrowed;
    narrowed.reserve(streams.size());
    for (const auto& [id, stream] : streams) {
      std::vector<Observation> obs;
      obs.reserve(stream.size());
      for (const auto& o : stream) {
        Observation n{o.date, {}, o.y};
        n.x.reserve(cols.size());
        for (std::size_t c : cols) n.x.push_back(o.x[c]);
        obs.push_back(std::move(n));
      }
      narrowed.emplace_back(id, std::move(obs));
    }
    try {
      const auto logs = evaluate_fleet(spec, narrowed, confidence, options);
      const Metrics m = compute_metrics(logs, 1.0);
      return m.count == 0 ? kInf : m.mae;
    } catch (const std::domain_error&) {
      return kInf;
    }
  };
}

std::vector<std::string> removal_set(const std::vector<std::string>& all, const std::vector<std::string>& flagged,
                                     const std::vector<std::vector<std::string>>& favored, bool union_rule) {
  auto contains = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  std::vector<std::string> out;
  for (const auto& name : all) {
    const bool weak = contains(flagged, name);
    bool disfavored = true;
    for (const auto& f : favored)
      if (contains(f, name)) disfavored = false;
    if (union_rule ? (weak || disfavored) : (weak && disfavored)) out.push_back(name);
  }
  return out;
}

std::vector<double> vif_scores(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  std::vector<double> out(static_cast<std::size_t>(p), kInf);
  if (p == 0) return out;
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  // Cross-products of the centered columns: regressing one column on the others
  // with an intercept reduces to this p x p system.
  const Eigen::MatrixXd c = centered.transpose() * centered;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sst = c(j, j);
    const double scale = centered.col(j).cwiseAbs().maxCoeff();
    if (n < 2 || sst <= 1e-24 * static_cast<double>(n) * std::max(1.0, scale * scale)) continue;
    if (p == 1) {
      out[static_cast<std::size_t>(j)] = 1.0;
      continue;
    }
    std::vector<Eigen::Index> others;
    for (Eigen::Index k = 0; k < p; ++k)
      if (k != j) others.push_back(k);
    const auto q = static_cast<Eigen::Index>(others.size());
    Eigen::MatrixXd a(q, q);
    Eigen::VectorXd b(q);
    for (Eigen::Index r = 0; r < q; ++r) {
      b(r) = c(others[static_cast<std::size_t>(r)], j);
      for (Eigen::Index s = 0; s < q; ++s) a(r, s) = c(others[static_cast<std::size_t>(r)], others[static_cast<std::size_t>(s)]);
    }
    const Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
    const double explained = b.dot(beta);
    const double unexplained = 1.0 - explained / sst;
    if (unexplained <= 1e-10) continue;
    out[static_cast<std::size_t>(j)] = 1.0 / unexplained;
  }
  return out;
}

VifResult vif_prune(const Eigen::MatrixXd& x, const std::vector<std::string>& names,
                    std::vector<std::vector<std::size_t>> groups, double threshold) {
  if (groups.empty()) {
    if (names.size() != static_cast<std::size_t>(x.cols())) throw std::invalid_argument("vif_prune: names/columns mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) groups.push_back({i});
  }
  if (groups.size() != names.size()) throw std::invalid_argument("vif_prune: names/groups mismatch");

  std::vector<std::size_t> alive(names.size());
  std::iota(alive.begin(), alive.end(), 0);
  VifResult out;
  while (true) {
    std::vector<std::size_t> cols;
    std::vector<std::size_t> owner;
    for (std::size_t g : alive)
      for (std::size_t c : groups[g]) {
        cols.push_back(c);
        owner.push_back(g);
      }
    const auto vif = vif_scores(select_columns(x, cols));
    std::vector<double> group_vif(names.size(), 0.0);
    for (std::size_t i = 0; i < cols.size(); ++i) group_vif[owner[i]] = std::max(group_vif[owner[i]], vif[i]);

    std::size_t worst = alive.size();
    for (std::size_t a = 0; a < alive.size(); ++a)
      if (worst == alive.size() || group_vif[alive[a]] > group_vif[alive[worst]]) worst = a;
    if (alive.size() <= 1 || worst == alive.size() || !(group_vif[alive[worst]] > threshold)) {
      for (std::size_t g : alive) {
        out.retained.push_back(names[g]);
        out.final_vif.emplace_back(names[g], alive.size() == 1 ? 1.0 : group_vif[g]);
      }
      return out;
    }
    out.dropped.push_back(names[alive[worst]]);
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(worst));
  }
}

std::vector<nlohmann::json> expand_grid(const nlohmann::json& axes) {
  if (!axes.is_object()) throw std::invalid_argument("expand_grid: axes must be an object");
  std::vector<nlohmann::json> out{nlohmann::json::object()};
  for (const auto& [key, values] : axes.items()) {
    if (!values.is_array()) throw std::invalid_argument("expand_grid: axis '" + key + "' must be an array");
    std::vector<nlohmann::json> next;
    for (const auto& partial : out)
      for (const auto& v : values) {
        nlohmann::json c = partial;
        c[key] = v;
        next.push_back(std::move(c));
      }
    out = std::move(next);
  }
  return out;
}

GridResult grid_search(const std::vector<nlohmann::json>& grid,
                       const std::function<double(const nlohmann::json&)>& score) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  GridResult out;
  out.best = grid.front();
  bool have = false;
  for (const auto& combo : grid) {
    const double s = score(combo);
    out.evaluated.emplace_back(combo, s);
    if (!have || s < out.best_mae) {
      out.best = combo;
      out.best_mae = s;
      have = true;
    }
  }
  return out;
}

}  // namespace firstdrive
