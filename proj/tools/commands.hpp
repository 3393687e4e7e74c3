#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "tmeval/rng.hpp"

namespace tmeval::cli {

/// Merged settings for one subcommand: the --config file's object with flag
/// values written over it. Relative paths from the file are resolved against
/// the file's directory (recorded under "_base").
using Config = nlohmann::json;

Config load_config(const std::optional<std::filesystem::path>& path);

/// Advisory exclusive lock on <dir>/.tmeval.lock, held for the object's lifetime.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  int fd_ = -1;
};

int cmd_synth(const Config& config);
int cmd_train(const Config& config);
int cmd_stability(const Config& config);
int cmd_alignment(const Config& config);
int cmd_ensemble(const Config& config);
int cmd_report(const Config& config);

/// A hyperparameter setting from the config: a fixed number, a list to pick
/// from uniformly, or {"min": a, "max": b} for a uniform draw.
double draw_hyperparam(const nlohmann::json& spec, bool integer, Rng& rng);

}  // namespace tmeval::cli
