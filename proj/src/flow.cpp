#include "kcone/flow.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>

#include "ode_engine.hpp"

namespace kcone {

Vec SystemDef::F(const Vec& x) const {
  require(x.size() == n, ErrorCode::DimensionMismatch,
          name + ": state dimension mismatch");
  return field(x);
}

Mat SystemDef::DF(const Vec& x) const {
  require(x.size() == n, ErrorCode::DimensionMismatch,
          name + ": state dimension mismatch");
  Mat J = jacobian ? jacobian(x) : finite_difference_jacobian(field, x);
  if (!J.allFinite())
    throw Error(ErrorCode::EvaluationFailure, name + ": non-finite Jacobian");
  return J;
}

Mat finite_difference_jacobian(const VectorField& field, const Vec& x) {
  const double h =
      std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + x.norm());
  const Eigen::Index n = x.size();
  Mat J(n, n);
  Vec xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    xp(j) = x(j) + h;
    const Vec fp = field(xp);
    xp(j) = x(j) - h;
    const Vec fm = field(xp);
    xp(j) = x(j);
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

void IntegratorConfig::validate() const {
  require(h > 0.0 && abs_tol > 0.0 && rel_tol > 0.0 && qr_interval > 0.0 &&
              sample_interval > 0.0 && max_steps > 0,
          ErrorCode::InvalidArgument,
          "integrator: step, tolerances and intervals must be positive");
}

namespace {

// Splits |T| into consecutive segments of length `stride` (last one shorter).
std::vector<double> segment_ends(double duration, double stride) {
  std::vector<double> ends;
  const auto full = static_cast<long>(std::floor(duration / stride + 1e-9));
  for (long i = 1; i <= full; ++i) ends.push_back(static_cast<double>(i) * stride);
  if (ends.empty() || duration - ends.back() > 1e-9 * std::max(1.0, duration))
    ends.push_back(duration);
  else
    ends.back() = duration;
  return ends;
}

detail::Rhs state_rhs(const SystemDef& system, double sign) {
  return [&system, sign](const Vec& y, Vec& dy) { dy = sign * system.field(y); };
}

}  // namespace

Trajectory integrate(const SystemDef& system, const Vec& x0, double T,
                     const IntegratorConfig& cfg) {
  cfg.validate();
  require(x0.size() == system.n, ErrorCode::DimensionMismatch,
          "integrate: initial state dimension mismatch");
  require(x0.allFinite(), ErrorCode::NonFiniteState, "integrate: non-finite x0");
  const double sign = T < 0.0 ? -1.0 : 1.0;
  const double duration = std::abs(T);

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  if (duration == 0.0) return traj;

  const auto rhs = state_rhs(system, sign);
  detail::StepControl ctl;
  Vec y = x0;
  double t = 0.0;
  for (double end : segment_ends(duration, cfg.sample_interval)) {
    detail::advance(rhs, y, end - t, cfg, ctl, y.size());
    t = end;
    traj.times.push_back(sign * t);
    traj.states.push_back(y);
  }
  return traj;
}

Vec flow_to(const SystemDef& system, const Vec& x0, double T,
            const IntegratorConfig& cfg) {
  cfg.validate();
  require(x0.size() == system.n, ErrorCode::DimensionMismatch,
          "flow_to: initial state dimension mismatch");
  const double sign = T < 0.0 ? -1.0 : 1.0;
  detail::StepControl ctl;
  Vec y = x0;
  detail::advance(state_rhs(system, sign), y, std::abs(T), cfg, ctl, y.size());
  return y;
}

std::pair<Mat, Mat> positive_qr(const Mat& V) {
  const Eigen::Index n = V.rows();
  const Eigen::Index m = V.cols();
  Eigen::HouseholderQR<Mat> qr(V);
  Mat Q = qr.householderQ() * Mat::Identity(n, m);
  Mat R = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (R(j, j) < 0.0) {
      R.row(j) *= -1.0;
      Q.col(j) *= -1.0;
    }
  }
  return {std::move(Q), std::move(R)};
}

Trajectory integrate_with_tangent(const SystemDef& system, const Vec& x0,
                                  const Mat& Q0, double T,
                                  const IntegratorConfig& cfg,
                                  bool keep_r_factors) {
  cfg.validate();
  const Eigen::Index n = system.n;
  require(x0.size() == n && Q0.rows() == n, ErrorCode::DimensionMismatch,
          "integrate_with_tangent: dimension mismatch");
  require(Q0.cols() >= 1 && Q0.cols() <= n, ErrorCode::InvalidArgument,
          "integrate_with_tangent: frame must have 1..n columns");
  require_orthonormal(Q0, 1e-8);
  const Eigen::Index m = Q0.cols();
  const double sign = T < 0.0 ? -1.0 : 1.0;
  const double duration = std::abs(T);

  detail::Rhs rhs = [&system, n, m, sign](const Vec& y, Vec& dy) {
    dy.resize(y.size());
    const Vec x = y.head(n);
    dy.head(n) = sign * system.field(x);
    const Mat J = sign * system.DF(x);
    Eigen::Map<const Mat> V(y.data() + n, n, m);
    Eigen::Map<Mat>(dy.data() + n, n, m) = J * V;
  };

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  traj.frames.push_back(Q0);

  Vec y(n + n * m);
  y.head(n) = x0;
  Eigen::Map<Mat>(y.data() + n, n, m) = Q0;

  detail::StepControl ctl;
  double t = 0.0;
  if (duration == 0.0) return traj;
  for (double end : segment_ends(duration, cfg.qr_interval)) {
    detail::advance(rhs, y, end - t, cfg, ctl, n);
    t = end;
    Eigen::Map<Mat> V(y.data() + n, n, m);
    auto [Q, R] = positive_qr(V);
    const Vec diag = R.diagonal();
    if ((diag.array() < 1e-300).any())
      throw Error(ErrorCode::RankCollapse, "tangent frame lost rank");
    V = Q;
    traj.times.push_back(sign * t);
    traj.states.push_back(y.head(n));
    traj.frames.push_back(std::move(Q));
    traj.r_log.push_back(diag.array().log().matrix());
    if (keep_r_factors) traj.r_factors.push_back(std::move(R));
  }
  return traj;
}

Quadrature gauss_legendre(int points) {
  require(points >= 1, ErrorCode::InvalidArgument,
          "gauss_legendre: need at least one node");
  Quadrature rule{Vec(points), Vec(points)};
  // Newton iteration on P_n from Chebyshev-like initial guesses on [-1, 1].
  for (int i = 0; i < points; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (points + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int j = 2; j <= points; ++j) {
        const double p2 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = points * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Map to [0, 1].
    rule.nodes(i) = 0.5 * (1.0 - z);
    rule.weights(i) = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return rule;
}

Mat averaged_jacobian(const SystemDef& system, const Vec& p, const Vec& q,
                      const Quadrature& rule) {
  Mat A = Mat::Zero(system.n, system.n);
  for (Eigen::Index i = 0; i < rule.nodes.size(); ++i) {
    const double s = rule.nodes(i);
    A += rule.weights(i) * system.DF(s * p + (1.0 - s) * q);
  }
  return A;
}

FundamentalPath fundamental_pq_path(const SystemDef& system, const Vec& p,
                                    const Vec& q, double T,
                                    const IntegratorConfig& cfg,
                                    int quad_points, double sample_interval) {
  cfg.validate();
  const Eigen::Index n = system.n;
  require(p.size() == n && q.size() == n, ErrorCode::DimensionMismatch,
          "fundamental_pq: dimension mismatch");
  require(quad_points >= 2, ErrorCode::InvalidArgument,
          "fundamental_pq: need at least 2 quadrature points");
  require(T >= 0.0 && sample_interval > 0.0, ErrorCode::InvalidArgument,
          "fundamental_pq: T must be >= 0 and sample_interval > 0");
  const Quadrature rule = gauss_legendre(quad_points);

  detail::Rhs rhs = [&system, &rule, n](const Vec& y, Vec& dy) {
    dy.resize(y.size());
    const Vec xp = y.head(n);
    const Vec xq = y.segment(n, n);
    dy.head(n) = system.field(xp);
    dy.segment(n, n) = system.field(xq);
    const Mat A = averaged_jacobian(system, xp, xq, rule);
    Eigen::Map<const Mat> U(y.data() + 2 * n, n, n);
    Eigen::Map<Mat>(dy.data() + 2 * n, n, n) = A * U;
  };

  Vec y(2 * n + n * n);
  y.head(n) = p;
  y.segment(n, n) = q;
  Eigen::Map<Mat>(y.data() + 2 * n, n, n) = Mat::Identity(n, n);

  FundamentalPath path;
  auto record = [&](double t) {
    path.times.push_back(t);
    path.p_states.push_back(y.head(n));
    path.q_states.push_back(y.segment(n, n));
    path.U.push_back(Eigen::Map<const Mat>(y.data() + 2 * n, n, n));
  };
  record(0.0);
  if (T == 0.0) return path;

  detail::StepControl ctl;
  double t = 0.0;
  for (double end : segment_ends(T, sample_interval)) {
    detail::advance(rhs, y, end - t, cfg, ctl, 2 * n);
    t = end;
    record(t);
  }
  return path;
}

Mat fundamental_pq(const SystemDef& system, const Vec& p, const Vec& q, double T,
                   const IntegratorConfig& cfg, int quad_points) {
  const double stride = T > 0.0 ? T : 1.0;
  return fundamental_pq_path(system, p, q, T, cfg, quad_points, stride).U.back();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
  os << 't';
  for (Eigen::Index i = 1; i <= n; ++i) os << ",x" << i;
  os << '\n';
  for (std::size_t s = 0; s < traj.size(); ++s) {
    os << format_double(traj.times[s]);
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << format_double(traj.states[s](i));
    os << '\n';
  }
}

}  // namespace kcone
