#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kcone/flow.hpp"

namespace kcone {

// x' = A x, optionally with a cone attached.
SystemDef linear_system(const Mat& A, std::string name = "linear",
                        std::optional<ConeSpec> cone = std::nullopt);

// Diagonal linear test system.
SystemDef linear_diag(const Vec& diagonal,
                      std::optional<ConeSpec> cone = std::nullopt);

// Goodwin-type negative feedback loop:
//   x1' = 1 / (1 + x_n^hill) - alpha x1,  xi' = x_{i-1} - alpha xi.
// Ships without a cone; any quadratic cone must be found and checked first.
SystemDef cyclic_feedback(int n, double alpha, double hill);

// Van der Pol (mu = 1) in (x1, x2) driving damped coordinates
//   xj' = -c_j xj + eps x_{j-1},  c_j = 20 + 2 (j - 3),  eps = 0.1,
// with cone P = diag(-1, -1, kappa, ..., kappa).
SystemDef smith_oscillator(int n, double kappa = 1.0);

// Planar oscillator with two nested attracting cycles (radii 1 and 3, an
// unstable cycle at radius 2) driving the same damped tail.
SystemDef smith_two_cycle(int n, double kappa = 1.0);

// Irreducible cooperative loop xi' = -xi + 2 tanh(x_{i-1}) with the rank-1
// orthant double cone. Bistable: equilibria 0 (saddle) and +-(x*, ..., x*).
SystemDef cooperative_hirsch(int n);

// Linear field B = P^{-1}(-I - lambda P) / 2, so P B + B^T P + lambda P = -I.
SystemDef lmi_linear(const Mat& P, double lambda);

// Named catalog with default parameters.
std::vector<SystemDef> builtin_systems();

// Looks up a builtin by name; parameterized names such as
// "smith_oscillator(6)" or "cooperative_hirsch(5)" are also accepted.
SystemDef find_system(const std::string& name);

// User-defined system from JSON:
//   {"name": ..., "type": "expression", "F": ["x2", "-x1"], "domain_box": ...}
//   {"name": ..., "type": "linear", "A": [[...]]}
// with optional "cone" and "domain_box": {"lo": [...], "hi": [...]}.
SystemDef system_from_json(const nlohmann::json& j);

// All *.json system files in `dir`, sorted by file name.
std::vector<SystemDef> load_user_systems(const std::filesystem::path& dir);

// Compiles an arithmetic expression in x1..xn (operators + - * / ^,
// functions sin cos tan exp log sqrt tanh abs, constant pi).
ScalarField compile_expression(const std::string& text, int n);

}  // namespace kcone
