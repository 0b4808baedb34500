#include "firstdrive/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "firstdrive/errors.hpp"
#include "firstdrive/rng.hpp"
#include "firstdrive/selection.hpp"
#include "firstdrive/synthdata.hpp"

namespace firstdrive {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams for the stages, so adding a stage never shifts another's draws.
constexpr std::uint64_t kSynthStream = 1;
constexpr std::uint64_t kHopkinsStream = 2;
constexpr std::uint64_t kForestScorerStream = 3;
constexpr std::uint64_t kModelStream = 4;

// ---- config reading ----

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where(), "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  const json& at(const std::string& key) const { return j_.at(key); }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback, std::uint64_t lo = 0,
                    std::uint64_t hi = std::numeric_limits<std::uint64_t>::max()) {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw ConfigError(child(key), "expected a non-negative integer");
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi) throw ConfigError(child(key), "out of range");
    return x;
  }

  double number(const std::string& key, double fallback, double lo, double hi) {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_number()) throw ConfigError(child(key), "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) throw ConfigError(child(key), "out of range");
    return x;
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    if (!at(key).is_boolean()) throw ConfigError(child(key), "expected true or false");
    return at(key).get<bool>();
  }

  std::string string(const std::string& key, std::string fallback) {
    if (!has(key)) return fallback;
    if (!at(key).is_string()) throw ConfigError(child(key), "expected a string");
    return at(key).get<std::string>();
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) {
    if (!has(key)) return fallback;
    const auto& v = at(key);
    if (!v.is_array()) throw ConfigError(child(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) throw ConfigError(child(key) + "[" + std::to_string(i) + "]", "expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(child(key), "unknown field");
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void check_model_kind(const std::string& kind, const std::string& path) {
  const auto& kinds = model_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ConfigError(path, "unknown model '" + kind + "'");
}

json merge_params(const json& base, const json& overlay) {
  json out = base.is_object() ? base : json::object();
  for (const auto& [k, v] : overlay.items()) out[k] = v;
  return out;
}

// Builds a throwaway model so bad parameters surface at config time, with the
// error re-rooted at `path`.
void validate_params(const std::string& kind, const json& params, const std::string& path) {
  try {
    (void)make_model(ModelSpec{kind, params, 0}, 1);
  } catch (const ConfigError& e) {
    std::string field = e.path();
    if (field.rfind("params.", 0) == 0) field = field.substr(7);
    throw ConfigError(path + "." + field, e.what());
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
}

// ---- artifacts ----

const std::vector<std::string>& artifact_names() {
  static const std::vector<std::string> names{
      "sessions.csv",  "ground_truth.json", "preprocessed_sessions.csv", "daily_examples.csv",
      "selection.json", "tuning.json",      "report.json",               "metrics.csv",
      "per_vehicle.csv", "over_time.csv",   "report.txt"};
  return names;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact(path.filename().string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path require(const RunConfig& c, const std::string& name) {
  const fs::path p = c.out / name;
  if (!fs::exists(p)) throw MissingArtifact(name);
  return p;
}

json read_json_artifact(const RunConfig& c, const std::string& name) {
  const std::string text = read_file(require(c, name));
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(name + ": " + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

fs::path sessions_input(const RunConfig& c) {
  if (c.sessions) {
    if (!fs::exists(*c.sessions)) throw MissingArtifact(c.sessions->string());
    return *c.sessions;
  }
  return require(c, "sessions.csv");
}

void write_manifest(const RunConfig& c) {
  json files = json::object();
  for (const auto& name : artifact_names()) {
    const fs::path p = c.out / name;
    if (fs::exists(p)) files[name] = sha256_hex(read_file(p));
  }
  json inputs = json::object();
  if (c.sessions && fs::exists(*c.sessions)) inputs["sessions"] = sha256_hex(read_file(*c.sessions));
  json config = c.source;
  config.erase("out");
  const json manifest{{"config_sha256", sha256_hex(config.dump())},
                      {"seed", c.seed},
                      {"inputs", inputs},
                      {"files", files}};
  write_file_atomic(c.out / "manifest.json", dump(manifest));
}

using VehicleExamples = std::vector<std::pair<std::string, std::vector<DailyExample>>>;
using Streams = std::vector<std::pair<std::string, std::vector<Observation>>>;

VehicleExamples load_examples(const RunConfig& c) {
  std::ifstream in(require(c, "daily_examples.csv"));
  VehicleExamples out;
  for (auto& ex : read_daily_examples_csv(in)) {
    if (out.empty() || out.back().first != ex.vehicle_id) {
      for (const auto& [id, _] : out)
        if (id == ex.vehicle_id) throw DataError("daily_examples.csv: rows of " + id + " are not contiguous");
      out.emplace_back(ex.vehicle_id, std::vector<DailyExample>{});
    }
    out.back().second.push_back(std::move(ex));
  }
  return out;
}

Streams encode_vehicles(const RunConfig& c, const VehicleExamples& fleet, const std::vector<std::string>& ids,
                        Target target) {
  const FeaturePipeline proto(FeatureSchema::standard(), c.running_window);
  Streams out;
  for (const auto& id : ids) {
    auto it = std::find_if(fleet.begin(), fleet.end(), [&](const auto& v) { return v.first == id; });
    if (it == fleet.end()) throw DataError("vehicle " + id + " has no daily examples");
    out.emplace_back(id, encode_stream(proto, it->second, target));
  }
  return out;
}

Streams narrow(const Streams& streams, const std::vector<std::size_t>& cols) {
  Streams out;
  for (const auto& [id, stream] : streams) {
    std::vector<Observation> obs;
    obs.reserve(stream.size());
    for (const auto& o : stream) {
      Observation n{o.date, {}, o.y};
      for (std::size_t col : cols) n.x.push_back(o.x[col]);
      obs.push_back(std::move(n));
    }
    out.emplace_back(id, std::move(obs));
  }
  return out;
}

json named_values(const std::vector<std::pair<std::string, double>>& v) {
  json out = json::array();
  for (const auto& [name, value] : v) out.push_back({name, value});
  return out;
}

json subset_json(const FeatureSubset& s) {
  return {{"features", s.names}, {"mae", s.mae}, {"steps", named_values(s.steps)}};
}

std::vector<std::string> json_strings(const json& j, const std::string& what) {
  try {
    return j.get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(what + ": " + e.what());
  }
}

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n';
}

// ---- stages ----

void stage_synth(const RunConfig& c, std::ostream* log) {
  if (c.sessions) {
    say(log, "synth: skipped, sessions come from " + c.sessions->string());
    return;
  }
  const auto profiles = default_fleet_profiles(c.synth.n_regular, c.synth.n_irregular, c.synth.profile_seed);
  const auto fleet = generate_fleet(profiles, c.synth.days, derive_seed(c.seed, kSynthStream));
  std::ostringstream csv;
  write_sessions_csv(csv, fleet.vehicles);
  write_file_atomic(c.out / "sessions.csv", csv.str());
  write_file_atomic(c.out / "ground_truth.json", dump(fleet.ground_truth));
  say(log, "synth: " + std::to_string(fleet.vehicles.size()) + " vehicles over " + std::to_string(c.synth.days) +
               " days");
}

void stage_preprocess(const RunConfig& c, std::ostream* log) {
  std::ifstream in(sessions_input(c));
  auto fleet = preprocess_fleet(read_sessions_csv(in), c.preprocess);
  std::ostringstream sessions;
  write_sessions_csv(sessions, fleet);
  std::vector<DailyExample> examples;
  for (const auto& v : fleet) {
    auto ex = build_daily_examples(v);
    examples.insert(examples.end(), ex.begin(), ex.end());
  }
  std::ostringstream daily;
  write_daily_examples_csv(daily, examples);
  write_file_atomic(c.out / "preprocessed_sessions.csv", sessions.str());
  write_file_atomic(c.out / "daily_examples.csv", daily.str());
  say(log, "preprocess: " + std::to_string(fleet.size()) + " vehicles kept, " + std::to_string(examples.size()) +
               " daily examples");
}

json select_features(const RunConfig& c, const VehicleExamples& fleet, const std::vector<std::string>& tuning,
                     Target target, std::ostream* log) {
  const FeatureSchema schema = FeatureSchema::standard();
  const auto all = schema.names();
  json out = json::object();
  json models = json::object();

  if (!c.selection.enabled || tuning.empty()) {
    for (const auto& kind : c.models)
      models[kind] = {{"method", "all"}, {"features", kind == "baseline" ? std::vector<std::string>{} : all}};
    out["models"] = models;
    return out;
  }

  const Streams streams = encode_vehicles(c, fleet, tuning, target);
  std::vector<VehicleMatrix> matrices;
  for (const auto& [id, s] : streams) matrices.push_back(to_matrix(id, s));

  const auto screen = pearson_screen(matrices, schema, c.selection.pearson_threshold);
  std::vector<std::vector<std::string>> favored;
  const auto ls = forward_sfs(all, batch_least_squares_scorer(matrices, schema), c.selection.forward_max_features);
  favored.push_back(ls.names);
  json forward{{"least_squares", subset_json(ls)}};
  if (c.selection.forest_scorer) {
    ForestScorerOptions fo;
    fo.seed = derive_seed(c.seed, kForestScorerStream);
    const auto forest = forward_sfs(all, forest_scorer(matrices, schema, fo), c.selection.forward_max_features);
    favored.push_back(forest.names);
    forward["forest"] = subset_json(forest);
  }
  const auto removed = removal_set(all, screen.flagged, favored, c.selection.union_rule);

  // VIF over the numeric and cyclic descriptors still in play; one-hot groups
  // always sum to one and would be collinear with the intercept by design.
  std::vector<std::string> vif_names;
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> vif_cols;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& d = schema.descriptors()[i];
    if (d.kind == FeatureKind::OneHot || std::find(removed.begin(), removed.end(), d.name) != removed.end()) continue;
    vif_names.push_back(d.name);
    std::vector<std::size_t> g;
    for (std::size_t k = 0; k < d.width(); ++k) {
      g.push_back(vif_cols.size());
      vif_cols.push_back(schema.offset(i) + k);
    }
    groups.push_back(std::move(g));
  }
  Eigen::Index rows = 0;
  for (const auto& m : matrices) rows += m.x.rows();
  Eigen::MatrixXd pooled(rows, static_cast<Eigen::Index>(vif_cols.size()));
  Eigen::Index r0 = 0;
  for (const auto& m : matrices) {
    for (std::size_t k = 0; k < vif_cols.size(); ++k)
      pooled.block(r0, static_cast<Eigen::Index>(k), m.x.rows(), 1) = m.x.col(static_cast<Eigen::Index>(vif_cols[k]));
    r0 += m.x.rows();
  }
  const VifResult vif = vif_names.size() >= 2 ? vif_prune(pooled, vif_names, groups, c.selection.vif_threshold)
                                              : VifResult{vif_names, {}, {}};

  std::vector<std::string> screened;
  for (const auto& name : all) {
    const bool gone = std::find(removed.begin(), removed.end(), name) != removed.end() ||
                      std::find(vif.dropped.begin(), vif.dropped.end(), name) != vif.dropped.end();
    if (!gone) screened.push_back(name);
  }
  say(log, "select[" + to_string(target) + "]: " + std::to_string(removed.size()) + " screened out, " +
               std::to_string(vif.dropped.size()) + " dropped for collinearity");

  const ValidationOptions vo{c.warm_up};
  for (const auto& kind : c.models) {
    if (kind == "baseline") {
      models[kind] = {{"method", "none"}, {"features", json::array()}};
      continue;
    }
    const bool backward = std::find(c.selection.backward_models.begin(), c.selection.backward_models.end(), kind) !=
                          c.selection.backward_models.end();
    if (!backward || screened.empty()) {
      models[kind] = {{"method", "screened"}, {"features", screened}};
      continue;
    }
    const json params = c.params.count(kind) ? c.params.at(kind) : json::object();
    const ModelSpec spec{kind, params, derive_seed(c.seed, kModelStream)};
    const auto result = backward_sfs(screened, progressive_scorer(spec, streams, schema, c.confidence, vo));
    json entry = subset_json(result);
    entry["method"] = "backward";
    models[kind] = entry;
    say(log, "select[" + to_string(target) + "]: " + kind + " keeps " + std::to_string(result.names.size()) +
                 " features");
  }

  out["pearson"] = named_values(screen.descriptor_r);
  out["flagged"] = screen.flagged;
  out["forward"] = forward;
  out["removed"] = removed;
  out["vif"] = {{"dropped", vif.dropped}, {"final", named_values(vif.final_vif)}};
  out["screened"] = screened;
  out["models"] = models;
  return out;
}

void stage_select(const RunConfig& c, std::ostream* log) {
  const VehicleExamples fleet = load_examples(c);
  std::vector<VehicleTargets> targets;
  for (const auto& [id, examples] : fleet) {
    VehicleTargets t{id, {}};
    for (const auto& ex : examples) t.points.push_back({ex.target_departure, ex.target_distance});
    targets.push_back(std::move(t));
  }
  const auto chosen =
      select_well_behaving(targets, c.selection.n_select, c.selection.split, derive_seed(c.seed, kHopkinsStream));
  if (chosen.fleet_smaller_than_request)
    say(log, "select: warning: fleet has " + std::to_string(fleet.size()) + " vehicles, fewer than the " +
                 std::to_string(c.selection.n_select) + " requested; using all of them");

  json ranking = json::array();
  for (const auto& [id, h] : chosen.ranking) ranking.push_back({{"vehicle_id", id}, {"hopkins", h}});
  json per_target = json::object();
  for (Target t : c.targets) per_target[to_string(t)] = select_features(c, fleet, chosen.tuning, t, log);

  const json report{{"hopkins",
                     {{"ranking", ranking},
                      {"selected", chosen.selected},
                      {"tuning", chosen.tuning},
                      {"test", chosen.test},
                      {"fleet_smaller_than_request", chosen.fleet_smaller_than_request}}},
                    {"targets", per_target}};
  write_file_atomic(c.out / "selection.json", dump(report));
  say(log, "select: " + std::to_string(chosen.tuning.size()) + " tuning and " + std::to_string(chosen.test.size()) +
               " test vehicles");
}

const json& lookup(const json& j, const std::vector<std::string>& keys, const std::string& artifact) {
  const json* cur = &j;
  std::string path = artifact;
  for (const auto& k : keys) {
    path += (path == artifact ? ":" : ".") + k;
    if (!cur->is_object() || !cur->contains(k)) throw MissingArtifact(path);
    cur = &cur->at(k);
  }
  return *cur;
}

void stage_tune(const RunConfig& c, std::ostream* log) {
  const json selection = read_json_artifact(c, "selection.json");
  const VehicleExamples fleet = load_examples(c);
  const auto tuning_ids = json_strings(lookup(selection, {"hopkins", "tuning"}, "selection.json"), "selection.json");
  const FeatureSchema schema = FeatureSchema::standard();
  const ValidationOptions vo{c.warm_up};

  json per_target = json::object();
  for (Target t : c.targets) {
    const std::string tname = to_string(t);
    const Streams streams = encode_vehicles(c, fleet, tuning_ids, t);
    json models = json::object();
    for (const auto& kind : c.models) {
      const auto features = json_strings(
          lookup(selection, {"targets", tname, "models", kind, "features"}, "selection.json"), "selection.json");
      const json base = c.params.count(kind) ? c.params.at(kind) : json::object();
      std::vector<json> grid{json::object()};
      if (auto it = c.hypergrids.find(kind); it != c.hypergrids.end() && !it->second.empty())
        grid = expand_grid(it->second);
      json entry;
      if (streams.empty()) {
        entry = {{"params", merge_params(base, grid.front())}, {"mae", nullptr}, {"evaluated", json::array()}};
      } else {
        const auto result = grid_search(grid, [&](const json& combo) {
          const ModelSpec spec{kind, merge_params(base, combo), derive_seed(c.seed, kModelStream)};
          return progressive_scorer(spec, streams, schema, c.confidence, vo)(features);
        });
        json evaluated = json::array();
        for (const auto& [combo, mae] : result.evaluated) evaluated.push_back({{"params", combo}, {"mae", mae}});
        entry = {{"params", merge_params(base, result.best)}, {"mae", result.best_mae}, {"evaluated", evaluated}};
      }
      say(log, "tune[" + tname + "]: " + kind + " " + entry["params"].dump());
      models[kind] = entry;
    }
    per_target[tname] = models;
  }
  write_file_atomic(c.out / "tuning.json", dump(json{{"targets", per_target}}));
}

void stage_evaluate(const RunConfig& c, std::ostream* log) {
  const json selection = read_json_artifact(c, "selection.json");
  const json tuning = read_json_artifact(c, "tuning.json");
  const VehicleExamples fleet = load_examples(c);
  const auto test_ids = json_strings(lookup(selection, {"hopkins", "test"}, "selection.json"), "selection.json");
  if (test_ids.empty()) throw DataError("selection.json: the test set is empty");
  const FeatureSchema schema = FeatureSchema::standard();
  const ValidationOptions vo{c.warm_up};

  std::vector<MetricsReport> reports;
  for (Target t : c.targets) {
    const std::string tname = to_string(t);
    const Streams streams = encode_vehicles(c, fleet, test_ids, t);
    for (const auto& kind : c.models) {
      const auto features = json_strings(
          lookup(selection, {"targets", tname, "models", kind, "features"}, "selection.json"), "selection.json");
      const json& params = lookup(tuning, {"targets", tname, kind, "params"}, "tuning.json");
      const ModelSpec spec{kind, params, derive_seed(c.seed, kModelStream)};
      const auto logs = evaluate_fleet(spec, narrow(streams, schema.columns_of(features)), c.confidence, vo);
      reports.push_back(build_report(kind, t, logs, default_threshold(t), c.curve_stride));
      say(log, "evaluate[" + tname + "]: " + kind + " done");
    }
  }
  json out = json::array();
  for (const auto& r : reports) out.push_back(to_json(r));
  std::ostringstream metrics, per_vehicle, over_time;
  write_metrics_csv(metrics, reports);
  write_per_vehicle_csv(per_vehicle, reports);
  write_over_time_csv(over_time, reports);
  write_file_atomic(c.out / "report.json", dump(json{{"test_vehicles", test_ids}, {"reports", out}}));
  write_file_atomic(c.out / "metrics.csv", metrics.str());
  write_file_atomic(c.out / "per_vehicle.csv", per_vehicle.str());
  write_file_atomic(c.out / "over_time.csv", over_time.str());
}

void stage_report(const RunConfig& c, std::ostream* log) {
  const json report = read_json_artifact(c, "report.json");
  std::vector<MetricsReport> reports;
  try {
    for (const auto& r : report.at("reports")) reports.push_back(report_from_json(r));
  } catch (const json::exception& e) {
    throw DataError(std::string("report.json: ") + e.what());
  }
  std::string text;
  for (Target t : {Target::Departure, Target::Distance}) {
    std::vector<MetricsReport> group;
    for (const auto& r : reports)
      if (r.target == t) group.push_back(r);
    if (group.empty()) continue;
    text += render_table(group) + "\n";
  }
  write_file_atomic(c.out / "report.txt", text);
  if (log) *log << text;
}

}  // namespace

std::map<std::string, json> default_hypergrids() {
  return {
      {"qr", {{"eta", {0.003, 0.01, 0.03}}, {"lambda", {0.0, 1e-4, 1e-3}}}},
      {"qknn", {{"k", {5, 10, 20}}, {"n", {100, 300}}}},
      {"qarf", {{"n_trees", {5, 10}}, {"grace_period", {25, 50}}}},
      {"mcnn", {{"hidden_layers", {1, 2}}, {"width", {16, 32}}, {"dropout", {0.1, 0.25}}}},
  };
}

RunConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override) {
  RunConfig c;
  Reader root(j, "");
  if (seed_override) {
    root.has("seed");
    c.seed = *seed_override;
  } else {
    if (!root.has("seed")) throw ConfigError("seed", "is required");
    c.seed = root.u64("seed", 0);
  }
  c.out = root.string("out", c.out.string());
  if (root.has("sessions")) c.sessions = root.string("sessions", "");

  if (root.has("synth")) {
    Reader r(root.at("synth"), "synth");
    c.synth.n_regular = r.u64("n_regular", c.synth.n_regular, 0, 100000);
    c.synth.n_irregular = r.u64("n_irregular", c.synth.n_irregular, 0, 100000);
    c.synth.days = static_cast<int>(r.u64("days", static_cast<std::uint64_t>(c.synth.days), 1, 100000));
    c.synth.profile_seed = r.u64("profile_seed", c.synth.profile_seed);
    r.finish();
  }
  if (root.has("preprocess")) {
    Reader r(root.at("preprocess"), "preprocess");
    c.preprocess.min_duration =
        std::chrono::seconds(r.u64("min_duration_s", static_cast<std::uint64_t>(c.preprocess.min_duration.count()), 0, 86400));
    c.preprocess.max_gap =
        std::chrono::minutes(r.u64("max_gap_min", static_cast<std::uint64_t>(c.preprocess.max_gap.count()), 0, 1440));
    c.preprocess.min_drives = r.u64("min_drives", c.preprocess.min_drives, 0, 1000000);
    r.finish();
  }
  if (root.has("features")) {
    Reader r(root.at("features"), "features");
    c.running_window = r.u64("running_window", c.running_window, 1, 100000);
    r.finish();
  }
  if (root.has("targets")) {
    c.targets.clear();
    const auto names = root.strings("targets", {});
    for (std::size_t i = 0; i < names.size(); ++i) {
      try {
        c.targets.push_back(parse_target(names[i]));
      } catch (const std::invalid_argument&) {
        throw ConfigError("targets[" + std::to_string(i) + "]", "expected \"departure\" or \"distance\"");
      }
    }
  }
  if (root.has("models")) {
    c.models = root.strings("models", {});
    for (std::size_t i = 0; i < c.models.size(); ++i) check_model_kind(c.models[i], "models[" + std::to_string(i) + "]");
  }
  if (root.has("params")) {
    const auto& p = root.at("params");
    if (!p.is_object()) throw ConfigError("params", "expected an object");
    for (const auto& [kind, value] : p.items()) {
      check_model_kind(kind, "params." + kind);
      validate_params(kind, value, "params." + kind);
      c.params[kind] = value;
    }
  }
  c.hypergrids = default_hypergrids();
  if (root.has("hypergrids")) {
    const auto& g = root.at("hypergrids");
    if (!g.is_object()) throw ConfigError("hypergrids", "expected an object");
    for (const auto& [kind, axes] : g.items()) {
      check_model_kind(kind, "hypergrids." + kind);
      if (!axes.is_object()) throw ConfigError("hypergrids." + kind, "expected an object of arrays");
      for (const auto& [axis, values] : axes.items())
        if (!values.is_array() || values.empty())
          throw ConfigError("hypergrids." + kind + "." + axis, "expected a non-empty array");
      const json base = c.params.count(kind) ? c.params.at(kind) : json::object();
      for (const auto& combo : expand_grid(axes)) validate_params(kind, merge_params(base, combo), "hypergrids." + kind);
      c.hypergrids[kind] = axes;
    }
  }
  if (root.has("selection")) {
    Reader r(root.at("selection"), "selection");
    auto& s = c.selection;
    s.enabled = r.flag("enabled", s.enabled);
    s.n_select = r.u64("n_select", s.n_select, 1, 1000000);
    s.split = r.number("split", s.split, 0.0, 1.0);
    s.pearson_threshold = r.number("pearson_threshold", s.pearson_threshold, 0.0, 1.0);
    s.forward_max_features = r.u64("forward_max_features", s.forward_max_features, 0, 1000);
    s.forest_scorer = r.flag("forest_scorer", s.forest_scorer);
    s.union_rule = r.flag("union_rule", s.union_rule);
    s.vif_threshold = r.number("vif_threshold", s.vif_threshold, 1.0, 1e300);
    s.backward_models = r.strings("backward_models", s.backward_models);
    for (std::size_t i = 0; i < s.backward_models.size(); ++i)
      check_model_kind(s.backward_models[i], "selection.backward_models[" + std::to_string(i) + "]");
    r.finish();
  }
  c.warm_up = root.u64("warm_up", c.warm_up, 0, 1000000);
  c.confidence = root.number("confidence", c.confidence, 1e-9, 1.0 - 1e-9);
  c.curve_stride = root.u64("curve_stride", c.curve_stride, 1, 1000000);
  root.finish();

  c.source = j;
  c.source["seed"] = c.seed;
  return c;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"synth", "preprocess", "select", "tune", "evaluate", "report"};
  return names;
}

void run_stage(const std::string& stage, const RunConfig& config, std::ostream* log) {
  if (stage == "all") {
    for (const auto& s : stage_names()) run_stage(s, config, log);
    return;
  }
  fs::create_directories(config.out);
  if (stage == "synth") {
    stage_synth(config, log);
  } else if (stage == "preprocess") {
    stage_preprocess(config, log);
  } else if (stage == "select") {
    stage_select(config, log);
  } else if (stage == "tune") {
    stage_tune(config, log);
  } else if (stage == "evaluate") {
    stage_evaluate(config, log);
  } else if (stage == "report") {
    stage_report(config, log);
  } else {
    throw ConfigError("stage", "unknown stage '" + stage + "'");
  }
  write_manifest(config);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

}  // namespace firstdrive
