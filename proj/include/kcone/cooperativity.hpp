#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kcone/cone.hpp"
#include "kcone/flow.hpp"

namespace kcone {

// Largest eigenvalue of the symmetrized S = P J + J^T P + lambda P.
double lmi_value(const Mat& P, const Mat& J, double lambda);
double lmi_value(const SystemDef& system, const ConeSpec& cone, const Vec& x, double lambda);

// Feasibility threshold 1e-9 |P| |J| (spectral norms).
double lmi_tolerance(const Mat& P, const Mat& J);

struct LambdaResult {
  double lambda_star = 0.0;
  double value = 0.0;
};

// Bracket guaranteed to contain a minimizer of lambda -> lmi_value(P, J, lambda).
std::pair<double, double> default_lambda_bracket(const Mat& P, const Mat& J);

// Golden-section search; the objective is convex in lambda. Throws
// BracketTooNarrow when the minimizer sits on an end of the bracket.
LambdaResult minimize_lmi(const Mat& P, const Mat& J, double lo, double hi);
LambdaResult find_lambda(const SystemDef& system, const ConeSpec& cone, const Vec& x,
                         std::optional<std::pair<double, double>> bracket = std::nullopt);

enum class Sampler { Uniform, Halton, Grid };
Sampler sampler_from_string(const std::string& name);
const char* to_string(Sampler s);

// Sample points of a box. Grid uses round(count^(1/n)) points per axis.
std::vector<Vec> sample_box(const Box& box, int count, Sampler sampler, std::uint64_t seed);

struct LmiSample {
  Vec x;
  double lambda_star = 0.0;
  double max_eig = 0.0;
  bool feasible = false;
};

struct LmiReport {
  std::vector<LmiSample> samples;
  double fraction_feasible = 0.0;
  Vec worst_point;
  double worst_value = 0.0;
  double worst_lambda = 0.0;
};

struct RegionOptions {
  int n_samples = 1000;
  Sampler sampler = Sampler::Halton;
  std::optional<std::pair<double, double>> bracket;
  std::uint64_t seed = 1;
  int jobs = 1;
};

LmiReport check_region(const SystemDef& system, const ConeSpec& cone, const Box& box,
                       const RegionOptions& opts = {});

struct UniformReport {
  bool ok = false;
  Vec worst_point;
  double worst_value = 0.0;
  int samples = 0;
};

// Constant-multiplier condition S(x, lambda) <= -eps I at every sample.
UniformReport check_smith_uniform(const SystemDef& system, const ConeSpec& cone,
                                  const Box& box, double lambda, double eps,
                                  const RegionOptions& opts = {});

struct PqOptions {
  int quad_points = 4;
  double sample_interval = 0.05;
  double t_min = 0.01;
  std::uint64_t seed = 1;
};

struct PqInvarianceReport {
  bool flux_ok = false;
  bool propagation_ok = false;
  double worst_flux = 0.0;          // most positive boundary flux / (|P| |A|)
  double worst_interior_margin = 0.0;  // most positive membership margin for t > t_min
  int flux_tests = 0;
  int propagation_tests = 0;
};

// Unit vectors on the cone boundary, balanced between the negative and
// positive eigenspaces of P.
std::vector<Vec> boundary_vectors(const ConeSpec& cone, int count, std::uint64_t seed);

PqInvarianceReport check_cone_invariance_pq(const SystemDef& system, const ConeSpec& cone,
                                            const Vec& p, const Vec& q, double T,
                                            int n_boundary, const IntegratorConfig& cfg,
                                            const PqOptions& opts = {});

struct ConeSearchResult {
  std::optional<ConeSpec> cone;
  double best_fraction = 0.0;
  Vec best_diagonal;
  int candidates = 0;
};

// Heuristic: brute-force search over diagonal P with k negative entries and
// magnitudes from `magnitudes` (first entry fixed to magnitude 1). A returned
// cone has fraction_feasible = 1 on the sampled box; absence is not a proof
// that no quadratic cone exists.
ConeSearchResult search_diagonal_cone(const SystemDef& system, int k,
                                      const std::vector<double>& magnitudes,
                                      const RegionOptions& opts);

nlohmann::json to_json(const LmiReport& report);
void write_lmi_csv(std::ostream& os, const LmiReport& report);

}  // namespace kcone
