#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "kcone/flow.hpp"
#include "kcone/types.hpp"

namespace kcone {

nlohmann::json vec_to_json(const Vec& v);
// Row-major nested arrays.
nlohmann::json mat_to_json(const Mat& m);

// Both throw ConfigError naming `what` on malformed input.
Vec vec_from_json(const nlohmann::json& j, const std::string& what);
Mat mat_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json to_json(const IntegratorConfig& cfg);
// Keys: method ("rk4" | "dopri"), h, abs_tol, rel_tol, max_steps,
// qr_interval, sample_interval. Missing keys keep the values of `base`.
IntegratorConfig integrator_config_from_json(const nlohmann::json& j,
                                             const IntegratorConfig& base = {});

// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& what);

}  // namespace kcone
