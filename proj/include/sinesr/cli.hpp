#pragma once

// Command-line workflow: train-lr -> synth-pairs -> train-sr -> infer /
// evaluate, plus degrade for classical LR synthesis.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 missing
// or unreadable data. Failures print one line to stderr:
//   error: category=<config|data|runtime> message=<text>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sinesr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

// Environment variable naming the directory that relative data paths are
// resolved against.
inline constexpr const char* kDataRootEnv = "SINESR_DATA_ROOT";

// Every configuration key with its default value.
nlohmann::json default_config();

// Flattened "section.key = default" lines.
std::vector<std::string> describe_config();

// Merges `file` over the defaults, then applies "dotted.key=value"
// overrides. Unknown keys are a ConfigError.
nlohmann::json resolve_config(const nlohmann::json& file, const std::vector<std::string>& overrides);

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace sinesr::cli
