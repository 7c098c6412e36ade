#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kcone/cone.hpp"
#include "kcone/types.hpp"

namespace kcone {

using VectorField = std::function<Vec(const Vec&)>;
using JacobianField = std::function<Mat(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;

// An autonomous vector field x' = F(x) together with the metadata the
// analysis pipelines need. Immutable once built; safe to share across threads.
struct SystemDef {
  std::string name;
  std::string description;
  int n = 0;
  VectorField field;
  JacobianField jacobian;  // empty: central finite differences
  Box domain_box;
  std::optional<ConeSpec> cone;
  ScalarField lambda_hint;  // optional pointwise multiplier guess

  Vec F(const Vec& x) const;
  Mat DF(const Vec& x) const;
  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian); }
};

// Central differences with step eps^(1/3) * (1 + |x|).
Mat finite_difference_jacobian(const VectorField& field, const Vec& x);

enum class Method { RK4, DormandPrince };

struct IntegratorConfig {
  Method method = Method::DormandPrince;
  double h = 1e-2;  // RK4 step
  double abs_tol = 1e-10;
  double rel_tol = 1e-10;
  long max_steps = 50'000'000;
  double qr_interval = 1.0;      // tangent integrations only
  double sample_interval = 0.1;  // output stride for integrate()

  void validate() const;
};

inline IntegratorConfig rk4_config(double h) {
  IntegratorConfig cfg;
  cfg.method = Method::RK4;
  cfg.h = h;
  return cfg;
}

inline constexpr double kBlowUpThreshold = 1e12;

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Mat> frames;     // orthonormal, one per sample (tangent runs)
  std::vector<Vec> r_log;      // log diag(R), one per QR step
  std::vector<Mat> r_factors;  // full R per QR step, when requested

  std::size_t size() const { return times.size(); }
  const Vec& back() const { return states.back(); }
};

// Samples x(t) every cfg.sample_interval (and at T). Negative T integrates
// the time-reversed field; times are then negative.
Trajectory integrate(const SystemDef& system, const Vec& x0, double T,
                     const IntegratorConfig& cfg);

// Final state only.
Vec flow_to(const SystemDef& system, const Vec& x0, double T,
            const IntegratorConfig& cfg);

// Joint integration of x' = F(x), V' = DF(x) V with QR re-orthonormalization
// every cfg.qr_interval. Sample i > 0 holds the state, the frame Q and
// log diag(R) at the end of QR block i.
Trajectory integrate_with_tangent(const SystemDef& system, const Vec& x0,
                                  const Mat& Q0, double T,
                                  const IntegratorConfig& cfg,
                                  bool keep_r_factors = false);

// Nodes and weights of the Gauss-Legendre rule on [0, 1].
struct Quadrature {
  Vec nodes;
  Vec weights;
};
Quadrature gauss_legendre(int points);

// A^{pq} = int_0^1 DF(s p + (1 - s) q) ds by Gauss-Legendre.
Mat averaged_jacobian(const SystemDef& system, const Vec& p, const Vec& q,
                      const Quadrature& rule);

struct FundamentalPath {
  std::vector<double> times;
  std::vector<Vec> p_states;
  std::vector<Vec> q_states;
  std::vector<Mat> U;
};

// Co-integrates Phi_t(p), Phi_t(q) and U' = A^{pq}(t) U, U(0) = I, sampling
// every `sample_interval`.
FundamentalPath fundamental_pq_path(const SystemDef& system, const Vec& p,
                                    const Vec& q, double T,
                                    const IntegratorConfig& cfg,
                                    int quad_points, double sample_interval);

Mat fundamental_pq(const SystemDef& system, const Vec& p, const Vec& q,
                   double T, const IntegratorConfig& cfg, int quad_points = 4);

// QR with non-negative diagonal in R. Returns {Q (n x m), R (m x m)}.
std::pair<Mat, Mat> positive_qr(const Mat& V);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

// 17 significant digits, round-trip safe.
std::string format_double(double v);

}  // namespace kcone
