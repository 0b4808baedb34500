#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "firstdrive/data_model.hpp"
#include "firstdrive/evaluation.hpp"

namespace firstdrive {

struct SynthConfig {
  std::size_t n_regular = 100;
  std::size_t n_irregular = 25;
  int days = 365;
  std::uint64_t profile_seed = 7;
};

struct SelectionConfig {
  bool enabled = true;
  std::size_t n_select = 100;
  double split = 0.8;
  double pearson_threshold = 0.02;
  std::size_t forward_max_features = 20;
  bool forest_scorer = true;
  bool union_rule = false;
  double vif_threshold = 10.0;
  // Models whose feature set comes from backward selection; the others use the
  // set left after screening and VIF pruning.
  std::vector<std::string> backward_models{"qr", "qknn"};
};

// Parsed run configuration. Every field except the seed has a default; see
// README for the file format.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  std::optional<std::filesystem::path> sessions;  // external sessions.csv; replaces the synth stage
  SynthConfig synth;
  PreprocessOptions preprocess;
  std::size_t running_window = 7;
  std::vector<Target> targets{Target::Departure, Target::Distance};
  std::vector<std::string> models{"baseline", "qr", "qknn", "qarf", "mcnn"};
  std::map<std::string, nlohmann::json> params;      // fixed per-model parameters
  std::map<std::string, nlohmann::json> hypergrids;  // per-model {"axis": [values]}
  SelectionConfig selection;
  std::size_t warm_up = 20;
  double confidence = 0.90;
  std::size_t curve_stride = 10;

  nlohmann::json source = nlohmann::json::object();  // as given, for the manifest hash
};

// Throws ConfigError naming the offending field. `seed` is mandatory unless
// `seed_override` is given.
RunConfig parse_config(const nlohmann::json& j, std::optional<std::uint64_t> seed_override = std::nullopt);

std::map<std::string, nlohmann::json> default_hypergrids();

const std::vector<std::string>& stage_names();  // synth, preprocess, select, tune, evaluate, report

// Runs one stage (or "all") writing artifacts under config.out. Throws
// MissingArtifact when a prior stage's output is absent, ConfigError / DataError
// as raised by the stage. `log` receives progress lines when non-null.
void run_stage(const std::string& stage, const RunConfig& config, std::ostream* log = nullptr);

// Writes via a temporary file in the same directory and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string sha256_hex(const std::string& data);

}  // namespace firstdrive
