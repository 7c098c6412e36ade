#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

namespace kcone {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kConfigSchema = "kcone-run-config/1";

enum ExitCode { kExitOk = 0, kExitValidation = 2, kExitNumeric = 3 };

// FNV-1a over the canonical dump of a config document.
std::uint64_t config_hash(const nlohmann::json& config);

// Entry point of the kcone command line tool.
int run_cli(int argc, const char* const* argv);

}  // namespace kcone
