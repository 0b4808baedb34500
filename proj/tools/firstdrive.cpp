// Command-line driver for the staged pipeline: synth, preprocess, select, tune,
// evaluate, report, or all of them in order.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "firstdrive/errors.hpp"
#include "firstdrive/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3, kData = 4 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string target;
  std::vector<std::string> models;
};

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw firstdrive::ConfigError("--config", "cannot open " + path);
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw firstdrive::ConfigError("--config", e.what());
  }
}

int run(const std::string& stage, const Flags& flags) {
  try {
    nlohmann::json j = load_config(flags.config);
    if (!j.is_object()) throw firstdrive::ConfigError("<root>", "expected an object");
    if (!flags.out.empty()) j["out"] = flags.out;
    if (!flags.target.empty()) j["targets"] = {flags.target};
    if (!flags.models.empty()) j["models"] = flags.models;
    const auto config = firstdrive::parse_config(j, flags.seed);
    firstdrive::run_stage(stage, config, &std::cout);
    return kOk;
  } catch (const firstdrive::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const firstdrive::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << " (run the earlier stage first)\n";
    return kMissing;
  } catch (const firstdrive::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-vehicle online prediction of the first daily drive"};
  app.require_subcommand(1, 1);

  Flags flags;
  std::string stage;
  std::vector<std::string> stages = firstdrive::stage_names();
  stages.push_back("all");
  for (const auto& name : stages) {
    auto* sub = app.add_subcommand(name, name == "all" ? "run every stage in order" : "run the " + name + " stage");
    sub->add_option("--config", flags.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "seed (overrides the config)");
    sub->add_option("--out", flags.out, "run directory (overrides the config)");
    sub->add_option("--target", flags.target, "restrict to one target")
        ->check(CLI::IsMember({"departure", "distance"}));
    sub->add_option("--model", flags.models, "restrict to these model kinds")
        ->check(CLI::IsMember({"baseline", "qr", "qknn", "qarf", "mcnn"}));
    sub->callback([&stage, name] { stage = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  return run(stage, flags);
}
