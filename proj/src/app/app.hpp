#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "anchormodel/model.hpp"

namespace anchorforge::app {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kInternal = 1, kConfigError = 2, kDataError = 3, kPartialFailure = 4 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CommandResult {
  int status = kOk;
  json summary;  // command output; {"error": text} on failure
};

/// Commands: gen_data, train, sample, edit, extend, label, eval. Each writes
/// <out>/run.json with the resolved config and SHA-256 of every artifact.
CommandResult run_command(const std::string& command, const json& config);
std::vector<std::string> command_names();

// Individual commands; they throw ConfigError / DataError.
json cmd_gen_data(const json& config);
json cmd_train(const json& config);
json cmd_sample(const json& config);
json cmd_edit(const json& config);
json cmd_extend(const json& config);
json cmd_label(const json& config, int& status);
json cmd_eval(const json& config, int& status);

json to_json(const model::CondScalars& s);
model::CondScalars scalars_from_json(const json& j);

}  // namespace anchorforge::app
