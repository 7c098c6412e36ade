#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kcone/cone.hpp"
#include "kcone/flow.hpp"

namespace kcone {

struct SeparationOptions {
  double gap_tol = 1e-6;  // two-seed certification threshold
  std::uint64_t seed = 1;
};

struct BundleSample {
  double time = 0.0;
  Vec point;
  Mat frame;
};

// Forward frame iteration: the dominant k-dimensional bundle E along the orbit
// of x0, recorded after T_warmup at every QR step up to T_warmup + T_record.
// Certified by an independently seeded second frame (NotConverged otherwise).
std::vector<BundleSample> estimate_E_bundle(const SystemDef& system, const Vec& x0,
                                            int k, double T_warmup, double T_record,
                                            const IntegratorConfig& cfg,
                                            const SeparationOptions& opts = {});

// Stabilized factorization of the forward tangent map along an orbit segment:
// DPhi over block i satisfies D_i Q[i] = Q[i+1] R[i] with Q[i] orthogonal n x n.
struct TangentCascade {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Mat> Q;
  std::vector<Mat> R;
  std::uint64_t seed = 0;

  std::size_t blocks() const { return R.size(); }
  // D_i applied to v (forward one block).
  Vec push(std::size_t i, const Vec& v) const;
};

TangentCascade build_cascade(const SystemDef& system, const Vec& x0, double T,
                             const IntegratorConfig& cfg, std::uint64_t seed);

// Pulls a random (n - k)-frame back from the end of the cascade through the
// factored inverse tangent maps. Entry i is the estimate of F at states[i].
std::vector<Mat> pullback_frames(const TangentCascade& cascade, int k,
                                 std::uint64_t seed);

// F at cascade point `index`, certified by two pull-back seeds.
Mat estimate_F_bundle(const TangentCascade& cascade, int k, std::size_t index,
                      const SeparationOptions& opts = {});

struct ConeSeparationCheck {
  bool e_ok = false;
  bool f_ok = false;
  double e_max_eig = 0.0;  // of E^T P E
  double f_min_eig = 0.0;  // of F^T P F
};

ConeSeparationCheck verify_cone_separation(const Mat& E, const Mat& F,
                                           const ConeSpec& cone);

struct SplittingEstimate {
  Vec point;
  Mat E_frame;
  Mat F_frame;
  double domination_margin = 0.0;  // lambda_k - lambda_{k+1} on the forward segment
  double invariance_residual = 0.0;
  double two_seed_gap_E = 0.0;
  double two_seed_gap_F = 0.0;
  bool cone_ok = false;
  ConeSeparationCheck cone_check;
  std::uint64_t seeds[2] = {0, 0};
};

// Splitting at x = Phi_{T_warmup}(x0): E from forward iteration over the
// warmup, F from pull-back over the following T_forward.
SplittingEstimate estimate_splitting(const SystemDef& system, const Vec& x0, int k,
                                     double T_warmup, double T_forward,
                                     const IntegratorConfig& cfg,
                                     const SeparationOptions& opts = {});

// `count` splittings at points spaced `spacing` apart along one orbit.
std::vector<SplittingEstimate> estimate_splittings_along(
    const SystemDef& system, const Vec& x0, int k, double T_warmup, double spacing,
    int count, double T_forward, const IntegratorConfig& cfg,
    const SeparationOptions& opts = {});

struct Projection {
  Vec P;  // component in E along F
  Vec Q;  // component in F along E
};

Projection projections(const SplittingEstimate& split, const Vec& v);
Projection projections(const Mat& E, const Mat& F, const Vec& v);

// Matrix of the projection onto span(E) along span(F).
Mat projection_matrix(const Mat& E, const Mat& F);

struct LyapunovEstimate {
  std::vector<double> exponents;  // descending
  double T_total = 0.0;
  double T_align = 0.0;           // start of the averaging window
  std::vector<Vec> history;       // running estimates after each QR block
  double k_lyapunov = 0.0;
  double late_oscillation = 0.0;  // range of the running k-th estimate, last half
  bool cauchy = true;             // late_oscillation <= 0.05
  std::uint64_t seed = 0;
};

inline constexpr double kDefaultAlignFraction = 0.1;

// Benettin estimate of the leading m exponents. The random initial frame is
// carried for the first align_fraction * T (whole QR blocks) before log R is
// accumulated, so the estimate carries no O(1/T) start-up bias.
LyapunovEstimate lyapunov_spectrum(const SystemDef& system, const Vec& x0, int m,
                                   double T, const IntegratorConfig& cfg,
                                   std::uint64_t seed,
                                   double align_fraction = kDefaultAlignFraction);

// k-Lyapunov exponent: growth rate of the infimum norm on the dominant k-plane.
LyapunovEstimate k_lyapunov(const SystemDef& system, const Vec& x0, int k, double T,
                            const IntegratorConfig& cfg, std::uint64_t seed,
                            double align_fraction = kDefaultAlignFraction);

double domination_margin(const SystemDef& system, const Vec& x0, int k, double T,
                         const IntegratorConfig& cfg, std::uint64_t seed);

// Exact growth rate (1/T) log |DPhi_T w| of a vector w in F at cascade point
// i0, propagated to i1 > i0 while projecting out E along F at each block.
double restricted_growth_rate(const TangentCascade& cascade,
                              const std::vector<Mat>& F_frames, int k,
                              std::size_t i0, std::size_t i1, const Vec& w);

struct SeparationConstants {
  double delta_prime = 0.0;
  double delta_double_prime = 0.0;
  double delta3 = 0.0;
  double C1 = 0.0;
  double projection_bound = 0.0;
  bool projection_bound_ok = false;  // projection_bound <= 1 / delta_prime
  int samples = 0;
};

SeparationConstants estimate_constants(const std::vector<SplittingEstimate>& splits,
                                       const ConeSpec& cone, int samples_per_split,
                                       std::uint64_t seed);

nlohmann::json splitting_report(const SplittingEstimate& split,
                                const SeparationConstants* constants);

}  // namespace kcone
