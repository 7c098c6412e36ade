#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kcone/cone.hpp"
#include "kcone/flow.hpp"

namespace kcone {

struct ClassifyConfig {
  double T_transient = 100.0;
  double T_observe = 40.0;
  double stride = 0.05;
  double tol_eq = 1e-6;
  double tol_close = 1e-3;  // relative to the diameter of the observed tail
  double tol_order = 1e-6;  // normalized form depth of a witness difference
  long pair_budget = 20000;
  double tau_min = 0.5;
  int window = 200;
  double verify_time = 1.0;  // forward flow used to re-verify witnesses
  double lyapunov_T = 20.0;  // 0 disables the lambda_k diagnostic
  int cycle_points = 400;    // resolution of stored cycle nets
  IntegratorConfig integrator = rk4_config(1e-2);
  std::uint64_t seed = 1;

  void validate() const;
};

enum class OrbitKind { ConvergesToEquilibrium, Periodic, PseudoOrdered, Unordered, Escaped };

const char* to_string(OrbitKind kind);

struct Witness {
  double t1 = 0.0;
  double t2 = 0.0;
  double margin = 0.0;        // depth of x(t1) - x(t2) inside the cone
  double margin_after = 0.0;  // same after flowing both points by verify_time
};

struct EquilibriumResult {
  Vec point;
  double residual = 0.0;
};

struct PeriodicResult {
  double period = 0.0;
  Vec representative;
  double closure_error = 0.0;
};

struct OrbitClass {
  OrbitKind kind = OrbitKind::Unordered;
  Vec x0;
  double transient = 0.0;
  std::optional<EquilibriumResult> equilibrium;
  std::optional<PeriodicResult> periodic;
  std::optional<Witness> witness;  // also attached to periodic orbits when found
  long pairs_tested = 0;
  double lambda_k = 0.0;  // NaN when not computed
  std::string escape_reason;
  std::vector<Vec> omega_net;
  std::vector<Vec> cycle_net;  // one period, periodic orbits only
  double min_field_on_net = 0.0;
  std::uint64_t seed = 0;
};

// Depth of v inside the cone: the negated normalized membership margin.
double order_depth(const ConeSpec& cone, const Vec& v);

std::optional<EquilibriumResult> detect_equilibrium(const SystemDef& system,
                                                    const Trajectory& traj, double tol_eq);

std::optional<PeriodicResult> detect_periodic(const SystemDef& system,
                                              const Trajectory& traj,
                                              const ClassifyConfig& cfg);

// Throws WitnessFailedVerification when a witness does not become strongly
// ordered under the forward flow.
std::optional<Witness> detect_pseudo_ordered(const SystemDef& system, const ConeSpec& cone,
                                             const Trajectory& traj,
                                             const ClassifyConfig& cfg,
                                             long* pairs_tested = nullptr);

OrbitClass classify_orbit(const SystemDef& system, const ConeSpec& cone, const Vec& x0,
                          const ClassifyConfig& cfg);

// Greedy net of the tail samples with separation max(tol_close * diam, tol_eq).
std::vector<Vec> thin_to_net(const std::vector<Vec>& states, const ClassifyConfig& cfg);

std::vector<Vec> omega_sample(const SystemDef& system, const Vec& x0,
                              const ClassifyConfig& cfg);

nlohmann::json to_json(const OrbitClass& c);
nlohmann::json to_json(const ClassifyConfig& cfg);
ClassifyConfig classify_config_from_json(const nlohmann::json& j,
                                         const ClassifyConfig& base = {});

}  // namespace kcone
