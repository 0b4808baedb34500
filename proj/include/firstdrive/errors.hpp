#pragma once

#include <stdexcept>
#include <string>

namespace firstdrive {

// Input data violates an invariant (overlapping sessions, bad timestamps, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A model or structure was queried before it has seen enough observations.
class InsufficientHistory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Run configuration does not match the documented schema. `path` names the
// offending field, e.g. "models[2].params.eta".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// A pipeline stage was started before the artifacts it consumes exist.
class MissingArtifact : public std::runtime_error {
 public:
  explicit MissingArtifact(std::string artifact)
      : std::runtime_error("missing artifact: " + artifact), artifact_(std::move(artifact)) {}
  const std::string& artifact() const noexcept { return artifact_; }

 private:
  std::string artifact_;
};

}  // namespace firstdrive
