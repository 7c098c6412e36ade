#include "ode_engine.hpp"

#include <algorithm>
#include <cmath>

namespace kcone::detail {
namespace {

void check_state(const Vec& y, Eigen::Index guard) {
  if (!y.allFinite())
    throw Error(ErrorCode::NonFiniteState, "integration produced a non-finite value");
  if (guard > 0 && y.head(guard).cwiseAbs().maxCoeff() > kBlowUpThreshold)
    throw Error(ErrorCode::NonFiniteState, "state exceeded the blow-up threshold");
}

void count_step(StepControl& ctl, const IntegratorConfig& cfg) {
  if (++ctl.steps > cfg.max_steps)
    throw Error(ErrorCode::StepLimitExceeded, "integrator step limit exceeded");
}

void advance_rk4(const Rhs& f, Vec& y, double duration, const IntegratorConfig& cfg,
                 StepControl& ctl, Eigen::Index guard) {
  const long n_steps =
      std::max<long>(1, static_cast<long>(std::ceil(duration / cfg.h - 1e-9)));
  const double h = duration / static_cast<double>(n_steps);
  Vec k1(y.size()), k2(y.size()), k3(y.size()), k4(y.size()), tmp(y.size());
  for (long s = 0; s < n_steps; ++s) {
    f(y, k1);
    tmp = y + 0.5 * h * k1;
    f(tmp, k2);
    tmp = y + 0.5 * h * k2;
    f(tmp, k3);
    tmp = y + h * k3;
    f(tmp, k4);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    count_step(ctl, cfg);
    check_state(y, guard);
  }
}

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (embedded 4th order weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double initial_step(const Rhs& f, const Vec& y, const IntegratorConfig& cfg) {
  Vec f0(y.size());
  f(y, f0);
  const Vec sc = (cfg.abs_tol + cfg.rel_tol * y.array().abs()).matrix();
  const double d0 = std::sqrt((y.array() / sc.array()).square().mean());
  const double d1 = std::sqrt((f0.array() / sc.array()).square().mean());
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  Vec y1 = y + h0 * f0;
  Vec f1(y.size());
  f(y1, f1);
  const double d2 =
      std::sqrt(((f1 - f0).array() / sc.array()).square().mean()) / h0;
  const double h1 = (std::max(d1, d2) <= 1e-15)
                        ? std::max(1e-6, h0 * 1e-3)
                        : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

void advance_dopri(const Rhs& f, Vec& y, double duration, const IntegratorConfig& cfg,
                   StepControl& ctl, Eigen::Index guard) {
  const Eigen::Index n = y.size();
  if (ctl.h_next <= 0.0) ctl.h_next = initial_step(f, y, cfg);
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);
  double t = 0.0;
  f(y, k1);
  while (t < duration) {
    const double remaining = duration - t;
    const bool last = ctl.h_next >= remaining * (1.0 - 1e-12);
    const double h = last ? remaining : ctl.h_next;

    tmp = y + h * a21 * k1;
    f(tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    f(tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    f(tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(tmp, k6);
    y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(y_new, k7);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const Vec sc = (cfg.abs_tol +
                    cfg.rel_tol * y.array().abs().max(y_new.array().abs()))
                       .matrix();
    double enorm = std::sqrt((err.array() / sc.array()).square().mean());
    if (!std::isfinite(enorm)) enorm = 1e10;
    count_step(ctl, cfg);

    const double factor =
        enorm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 5.0);
    if (enorm <= 1.0) {
      t = last ? duration : t + h;
      y.swap(y_new);
      k1.swap(k7);
      check_state(y, guard);
      // A step clipped to the segment end does not shrink the proposal.
      if (!last || h >= ctl.h_next) ctl.h_next = h * factor;
    } else {
      ctl.h_next = h * std::min(1.0, factor);
      if (ctl.h_next < 1e-14 * std::max(1.0, duration))
        throw Error(ErrorCode::NonFiniteState, "adaptive step size underflow");
    }
  }
}

}  // namespace

void advance(const Rhs& f, Vec& y, double duration, const IntegratorConfig& cfg,
             StepControl& ctl, Eigen::Index guard) {
  if (duration <= 0.0) return;
  if (cfg.method == Method::RK4)
    advance_rk4(f, y, duration, cfg, ctl, guard);
  else
    advance_dopri(f, y, duration, cfg, ctl, guard);
}

}  // namespace kcone::detail
