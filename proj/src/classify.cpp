#include "kcone/classify.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "kcone/json_io.hpp"
#include "kcone/random.hpp"
#include "kcone/separation.hpp"

namespace kcone {
namespace {

double box_diameter(const std::vector<Vec>& states, std::size_t from) {
  if (from >= states.size()) return 0.0;
  Vec lo = states[from];
  Vec hi = states[from];
  for (std::size_t i = from + 1; i < states.size(); ++i) {
    lo = lo.cwiseMin(states[i]);
    hi = hi.cwiseMax(states[i]);
  }
  return (hi - lo).norm();
}

Vec newton_refine(const SystemDef& system, const Vec& x0) {
  Vec x = x0;
  double res = system.F(x).norm();
  for (int it = 0; it < 50 && res > 1e-15; ++it) {
    const Vec step = system.DF(x).colPivHouseholderQr().solve(-system.F(x));
    if (!step.allFinite()) break;
    const Vec next = x + step;
    const double next_res = system.F(next).norm();
    if (!(next_res < res)) break;
    x = next;
    res = next_res;
  }
  return x;
}

Trajectory observe(const SystemDef& system, const Vec& x, const ClassifyConfig& cfg) {
  IntegratorConfig ic = cfg.integrator;
  ic.sample_interval = cfg.stride;
  return integrate(system, x, cfg.T_observe, ic);
}

}  // namespace

void ClassifyConfig::validate() const {
  require(T_transient >= 0.0 && T_observe > 0.0 && stride > 0.0 && tol_eq > 0.0 &&
              tol_close > 0.0 && tol_order > 0.0 && pair_budget >= 0 && tau_min > 0.0 &&
              window >= 1 && verify_time > 0.0 && lyapunov_T >= 0.0 && cycle_points >= 8,
          ErrorCode::InvalidArgument, "classify: durations and tolerances must be positive");
  require(tau_min > 2.0 * stride, ErrorCode::InvalidArgument,
          "classify: tau_min must exceed twice the stride");
  require(T_observe > tau_min, ErrorCode::InvalidArgument,
          "classify: observation window shorter than tau_min");
  integrator.validate();
}

const char* to_string(OrbitKind kind) {
  switch (kind) {
    case OrbitKind::ConvergesToEquilibrium:
      return "ConvergesToEquilibrium";
    case OrbitKind::Periodic:
      return "Periodic";
    case OrbitKind::PseudoOrdered:
      return "PseudoOrdered";
    case OrbitKind::Unordered:
      return "Unordered";
    case OrbitKind::Escaped:
      return "EscapedDomain";
  }
  return "?";
}

double order_depth(const ConeSpec& cone, const Vec& v) {
  return -membership(cone, v).margin;
}

std::optional<EquilibriumResult> detect_equilibrium(const SystemDef& system,
                                                    const Trajectory& traj, double tol_eq) {
  require(traj.size() > 0, ErrorCode::InvalidArgument, "detect_equilibrium: empty trajectory");
  const Vec& x_end = traj.back();
  if (!(system.F(x_end).norm() < tol_eq)) return std::nullopt;
  const std::size_t from = traj.size() - (traj.size() + 9) / 10;
  for (std::size_t i = from; i < traj.size(); ++i)
    if ((traj.states[i] - x_end).norm() >= tol_eq) return std::nullopt;

  Vec eq = x_end;
  try {
    const Vec refined = newton_refine(system, x_end);
    if ((refined - x_end).norm() < 1e-3 * (1.0 + x_end.norm())) eq = refined;
  } catch (const Error&) {
    // keep the integrated end point
  }
  return EquilibriumResult{eq, system.F(eq).norm()};
}

std::optional<PeriodicResult> detect_periodic(const SystemDef& system,
                                              const Trajectory& traj,
                                              const ClassifyConfig& cfg) {
  if (traj.size() < 3) return std::nullopt;
  const Vec& xr = traj.states.front();
  const Vec normal = system.F(xr);
  if (normal.norm() < cfg.tol_eq) return std::nullopt;
  const double diam = box_diameter(traj.states, 0);
  if (diam == 0.0) return std::nullopt;
  const double t0 = traj.times.front();
  auto section = [&](const Vec& x) { return normal.dot(x - xr); };

  IntegratorConfig ic = cfg.integrator;
  for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
    const double ga = section(traj.states[i]);
    const double gb = section(traj.states[i + 1]);
    if (!(ga < 0.0 && gb >= 0.0)) continue;
    if (traj.times[i + 1] - t0 < cfg.tau_min) continue;

    // Bisection on the section coordinate, re-integrating from sample i.
    double lo = 0.0;
    double hi = traj.times[i + 1] - traj.times[i];
    for (int it = 0; it < 60 && hi - lo > 1e-14 * (1.0 + traj.times[i]); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (section(flow_to(system, traj.states[i], mid, ic)) < 0.0)
        lo = mid;
      else
        hi = mid;
    }
    const double tau = traj.times[i] - t0 + 0.5 * (lo + hi);
    if (tau < cfg.tau_min) continue;
    const double closure = (flow_to(system, xr, tau, ic) - xr).norm();
    if (closure < cfg.tol_close * diam) return PeriodicResult{tau, xr, closure};
  }
  return std::nullopt;
}

std::optional<Witness> detect_pseudo_ordered(const SystemDef& system, const ConeSpec& cone,
                                             const Trajectory& traj,
                                             const ClassifyConfig& cfg,
                                             long* pairs_tested) {
  const auto& s = traj.states;
  const std::size_t N = s.size();
  const double distinct = std::max(cfg.tol_eq, 1e-12);
  long tested = 0;

  auto check = [&](std::size_t i, std::size_t j) -> std::optional<Witness> {
    ++tested;
    const Vec d = s[i] - s[j];
    if (d.norm() <= distinct) return std::nullopt;
    const double depth = order_depth(cone, d);
    if (!(depth > cfg.tol_order)) return std::nullopt;
    const Vec a = flow_to(system, s[i], cfg.verify_time, cfg.integrator);
    const Vec b = flow_to(system, s[j], cfg.verify_time, cfg.integrator);
    if (ordered(cone, a, b) != Order::StronglyOrdered)
      throw Error(ErrorCode::WitnessFailedVerification,
                  "ordered pair at t = " + format_double(traj.times[i]) + ", " +
                      format_double(traj.times[j]) +
                      " is not strongly ordered after the forward flow");
    return Witness{traj.times[i], traj.times[j], depth, order_depth(cone, a - b)};
  };

  std::optional<Witness> found;
  for (std::size_t i = 0; i < N && !found; ++i)
    for (std::size_t j = i + 1; j < N && j <= i + static_cast<std::size_t>(cfg.window) && !found;
         ++j)
      found = check(i, j);

  if (!found && N >= 2) {
    Rng rng(derive_seed(cfg.seed, 0x5eed));
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    for (long p = 0; p < cfg.pair_budget && !found; ++p) {
      const std::size_t i = pick(rng);
      const std::size_t j = pick(rng);
      if (i == j) continue;
      found = check(std::min(i, j), std::max(i, j));
    }
  }
  if (pairs_tested) *pairs_tested = tested;
  return found;
}

std::vector<Vec> thin_to_net(const std::vector<Vec>& states, const ClassifyConfig& cfg) {
  std::vector<Vec> net;
  if (states.empty()) return net;
  const double sep = std::max(cfg.tol_close * box_diameter(states, 0), cfg.tol_eq);
  for (const Vec& x : states) {
    bool close = false;
    for (const Vec& y : net)
      if ((x - y).norm() < sep) {
        close = true;
        break;
      }
    if (!close) net.push_back(x);
  }
  return net;
}

std::vector<Vec> omega_sample(const SystemDef& system, const Vec& x0,
                              const ClassifyConfig& cfg) {
  cfg.validate();
  const Vec start = cfg.T_transient > 0.0
                        ? flow_to(system, x0, cfg.T_transient, cfg.integrator)
                        : x0;
  return thin_to_net(observe(system, start, cfg).states, cfg);
}

OrbitClass classify_orbit(const SystemDef& system, const ConeSpec& cone, const Vec& x0,
                          const ClassifyConfig& cfg) {
  cfg.validate();
  require(x0.size() == system.n && cone.dim() == system.n, ErrorCode::DimensionMismatch,
          "classify_orbit: dimension mismatch");
  require(system.domain_box.contains(x0), ErrorCode::InvalidArgument,
          "classify_orbit: x0 outside the domain box");

  OrbitClass c;
  c.x0 = x0;
  c.seed = cfg.seed;
  c.lambda_k = std::numeric_limits<double>::quiet_NaN();

  Trajectory traj;
  try {
    if (system.F(x0).norm() < cfg.tol_eq) {
      c.transient = 0.0;
      traj.times.push_back(0.0);
      traj.states.push_back(x0);
    } else {
      c.transient = cfg.T_transient;
      const Vec start =
          cfg.T_transient > 0.0 ? flow_to(system, x0, cfg.T_transient, cfg.integrator) : x0;
      traj = observe(system, start, cfg);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFiniteState) throw;
    c.kind = OrbitKind::Escaped;
    c.escape_reason = e.what();
    return c;
  }

  c.omega_net = thin_to_net(traj.states, cfg);
  c.min_field_on_net = std::numeric_limits<double>::infinity();
  for (const Vec& y : c.omega_net)
    c.min_field_on_net = std::min(c.min_field_on_net, system.F(y).norm());

  if (auto eq = detect_equilibrium(system, traj, cfg.tol_eq)) {
    c.kind = OrbitKind::ConvergesToEquilibrium;
    c.equilibrium = std::move(eq);
  } else if (auto per = detect_periodic(system, traj, cfg)) {
    c.kind = OrbitKind::Periodic;
    c.periodic = std::move(per);
    IntegratorConfig ic = cfg.integrator;
    ic.sample_interval = c.periodic->period / cfg.cycle_points;
    c.cycle_net = integrate(system, c.periodic->representative, c.periodic->period, ic).states;
    c.witness = detect_pseudo_ordered(system, cone, traj, cfg, &c.pairs_tested);
  } else if (auto w = detect_pseudo_ordered(system, cone, traj, cfg, &c.pairs_tested)) {
    c.kind = OrbitKind::PseudoOrdered;
    c.witness = std::move(w);
  } else {
    c.kind = OrbitKind::Unordered;
  }
  if (c.witness) {
    c.witness->t1 += c.transient;
    c.witness->t2 += c.transient;
  }

  const int k = cone.rank();
  if (cfg.lyapunov_T > 0.0 && k < system.n) {
    try {
      IntegratorConfig ic = cfg.integrator;
      ic.qr_interval = 1.0;
      c.lambda_k = k_lyapunov(system, traj.back(), k, cfg.lyapunov_T, ic,
                              derive_seed(cfg.seed, 0x1a9))
                       .k_lyapunov;
    } catch (const Error&) {
      // diagnostic only
    }
  }
  return c;
}

nlohmann::json to_json(const OrbitClass& c) {
  nlohmann::json j;
  j["x0"] = vec_to_json(c.x0);
  j["class"] = to_string(c.kind);
  j["transient"] = c.transient;
  j["eq"] = c.equilibrium ? nlohmann::json{{"point", vec_to_json(c.equilibrium->point)},
                                           {"residual", c.equilibrium->residual}}
                          : nlohmann::json(nullptr);
  j["period"] = c.periodic
                    ? nlohmann::json{{"period", c.periodic->period},
                                     {"representative", vec_to_json(c.periodic->representative)},
                                     {"closure_error", c.periodic->closure_error}}
                    : nlohmann::json(nullptr);
  j["witness"] = c.witness ? nlohmann::json{{"t1", c.witness->t1},
                                            {"t2", c.witness->t2},
                                            {"margin", c.witness->margin},
                                            {"margin_after", c.witness->margin_after}}
                           : nlohmann::json(nullptr);
  j["margin"] = c.witness ? nlohmann::json(c.witness->margin) : nlohmann::json(nullptr);
  j["pairs_tested"] = c.pairs_tested;
  j["lambda_k"] = std::isfinite(c.lambda_k) ? nlohmann::json(c.lambda_k) : nlohmann::json(nullptr);
  if (c.kind == OrbitKind::Escaped) j["escape_reason"] = c.escape_reason;
  j["seeds"] = {c.seed};
  return j;
}

nlohmann::json to_json(const ClassifyConfig& cfg) {
  return {{"T_transient", cfg.T_transient}, {"T_observe", cfg.T_observe},
          {"stride", cfg.stride},           {"tol_eq", cfg.tol_eq},
          {"tol_close", cfg.tol_close},     {"tol_order", cfg.tol_order},
          {"pair_budget", cfg.pair_budget}, {"tau_min", cfg.tau_min},
          {"window", cfg.window},           {"verify_time", cfg.verify_time},
          {"lyapunov_T", cfg.lyapunov_T},   {"cycle_points", cfg.cycle_points},
          {"integrator", to_json(cfg.integrator)}};
}

ClassifyConfig classify_config_from_json(const nlohmann::json& j, const ClassifyConfig& base) {
  require_keys(j, {"T_transient", "T_observe", "stride", "tol_eq", "tol_close", "tol_order",
                   "pair_budget", "tau_min", "window", "verify_time", "lyapunov_T",
                   "cycle_points", "integrator"},
               "classify");
  ClassifyConfig cfg = base;
  auto number = [&j](const char* key, double& out) {
    if (!j.contains(key)) return;
    require(j[key].is_number(), ErrorCode::ConfigError,
            std::string("classify.") + key + ": expected number");
    out = j[key].get<double>();
  };
  auto integer = [&j](const char* key, auto& out) {
    if (!j.contains(key)) return;
    require(j[key].is_number_integer(), ErrorCode::ConfigError,
            std::string("classify.") + key + ": expected integer");
    out = j[key].get<std::decay_t<decltype(out)>>();
  };
  number("T_transient", cfg.T_transient);
  number("T_observe", cfg.T_observe);
  number("stride", cfg.stride);
  number("tol_eq", cfg.tol_eq);
  number("tol_close", cfg.tol_close);
  number("tol_order", cfg.tol_order);
  number("tau_min", cfg.tau_min);
  number("verify_time", cfg.verify_time);
  number("lyapunov_T", cfg.lyapunov_T);
  integer("pair_budget", cfg.pair_budget);
  integer("window", cfg.window);
  integer("cycle_points", cfg.cycle_points);
  if (j.contains("integrator"))
    cfg.integrator = integrator_config_from_json(j["integrator"], cfg.integrator);
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return cfg;
}

}  // namespace kcone
