#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "firstdrive/errors.hpp"
#include "firstdrive/pipeline.hpp"

using namespace firstdrive;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("firstdrive_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

nlohmann::json small_config(const fs::path& out) {
  return {{"seed", 5},
          {"out", out.string()},
          {"synth", {{"n_regular", 6}, {"n_irregular", 2}, {"days", 120}}},
          {"selection",
           {{"n_select", 8}, {"forward_max_features", 4}, {"forest_scorer", false}, {"backward_models", {"qknn"}}}},
          {"hypergrids",
           {{"qr", {{"eta", {0.01, 0.03}}}},
            {"qknn", {{"k", {5, 10}}}},
            {"qarf", {{"n_trees", {3}}}},
            {"mcnn", {{"width", {8}}, {"mc_passes", {10}}}}}}};
}

std::string config_error_path(const nlohmann::json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<no error>";
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FIRSTDRIVE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("sha256 test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config errors name the offending field") {
  CHECK(config_error_path(nlohmann::json::object()) == "seed");
  CHECK(config_error_path({{"seed", 1}, {"colour", "red"}}) == "colour");
  CHECK(config_error_path({{"seed", 1}, {"synth", {{"days", "many"}}}}) == "synth.days");
  CHECK(config_error_path({{"seed", 1}, {"synth", {{"typo", 1}}}}) == "synth.typo");
  CHECK(config_error_path({{"seed", 1}, {"targets", {"speed"}}}) == "targets[0]");
  CHECK(config_error_path({{"seed", 1}, {"params", {{"qr", {{"eta", -1}}}}}}) == "params.qr.eta");
  CHECK(config_error_path({{"seed", 1}, {"hypergrids", {{"qknn", {{"k", {5, 0}}}}}}}) == "hypergrids.qknn.k");
  CHECK(config_error_path({{"seed", 1}, {"hypergrids", {{"qknn", {{"k", nlohmann::json::array()}}}}}}) ==
        "hypergrids.qknn.k");
  CHECK(config_error_path({{"seed", 1}, {"confidence", 1.5}}) == "confidence");
  CHECK(config_error_path({{"seed", 1}, {"selection", {{"split", 2.0}}}}) == "selection.split");

  const auto c = parse_config(nlohmann::json::object(), 9);
  CHECK(c.seed == 9);
  CHECK(c.warm_up == 20);
  CHECK(c.confidence == 0.90);
  CHECK(c.models.size() == 5);
  CHECK(parse_config({{"seed", 3}}, 4).seed == 4);
}

TEST_CASE("evaluate before preprocess reports the missing artifact") {
  const auto dir = scratch("missing");
  const auto config = parse_config(small_config(dir));
  try {
    run_stage("evaluate", config);
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.artifact() == "selection.json");
  }
  CHECK_THROWS_AS(run_stage("bake", config), ConfigError);
}

TEST_CASE("staged run is reproducible and the manifest covers every artifact") {
  const auto a = scratch("run_a"), b = scratch("run_b");
  for (const auto& dir : {a, b}) {
    const auto config = parse_config(small_config(dir));
    for (const auto& stage : stage_names()) run_stage(stage, config);
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename().string();
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / name), name);
    CHECK_MESSAGE(name.find(".tmp") == std::string::npos, name);
    if (name == "manifest.json") continue;
    ++files;
    REQUIRE_MESSAGE(manifest.at("files").contains(name), name);
    CHECK(manifest.at("files").at(name) == sha256_hex(slurp(entry.path())));
  }
  CHECK(files == manifest.at("files").size());
  CHECK(manifest.at("seed") == 5);
  for (const auto* name : {"sessions.csv", "ground_truth.json", "preprocessed_sessions.csv", "daily_examples.csv",
                           "selection.json", "tuning.json", "report.json", "metrics.csv", "per_vehicle.csv",
                           "over_time.csv", "report.txt"})
    CHECK_MESSAGE(fs::exists(a / name), name);

  const auto report = slurp(a / "report.txt");
  CHECK(report.find("MAE") != std::string::npos);
  CHECK(report.find("MAPE") != std::string::npos);
  for (const auto* kind : {"baseline", "qr", "qknn", "qarf", "mcnn"}) CHECK(report.find(kind) != std::string::npos);
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  const auto cfg = dir / "config.json";
  {
    std::ofstream out(cfg);
    out << small_config(dir / "run").dump(2);
  }
  const auto bad = dir / "bad.json";
  {
    std::ofstream out(bad);
    out << R"({"seed": 1, "warm_up": "soon"})";
  }
  CHECK(run_cli("evaluate --config " + cfg.string()) == 3);
  CHECK(run_cli("synth --config " + bad.string()) == 2);
  CHECK(run_cli("synth") == 2);  // no seed anywhere
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("synth --config " + cfg.string() + " --target speed") == 2);
  CHECK(run_cli("synth --config " + cfg.string()) == 0);
  CHECK(fs::exists(dir / "run" / "sessions.csv"));

  // A session file with a broken row is a data error.
  const auto broken = dir / "broken.csv";
  {
    std::ofstream out(broken);
    out << "vehicle_id,kind\nV,drive\n";
  }
  auto external = small_config(dir / "ext");
  external["sessions"] = broken.string();
  {
    std::ofstream out(dir / "ext.json");
    out << external.dump();
  }
  CHECK(run_cli("preprocess --config " + (dir / "ext.json").string()) == 4);
}
