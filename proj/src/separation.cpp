#include "kcone/separation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "kcone/json_io.hpp"
#include "kcone/random.hpp"

namespace kcone {
namespace {

constexpr double kSolveResidualTol = 1e-8;

void check_k(const SystemDef& system, int k) {
  require(k >= 1 && k < system.n, ErrorCode::InvalidArgument,
          "separation: need 1 <= k < n");
}

std::size_t block_index(double t, double qr_interval) {
  return static_cast<std::size_t>(std::llround(t / qr_interval));
}

Mat orthonormalize(const Mat& V) { return positive_qr(V).first; }

// Normwise backward error of the triangular solve R X = B.
double solve_residual(const Mat& R, const Mat& X, const Mat& B) {
  const double denom = R.norm() * X.norm() + B.norm();
  return denom == 0.0 ? 0.0 : (R * X - B).norm() / denom;
}

// Splittings at the given cascade indices. `E_check` is an independently
// seeded k-frame run over the same orbit.
std::vector<SplittingEstimate> splittings_from(const SystemDef& system,
                                               const TangentCascade& cascade,
                                               const Trajectory& E_check, int k,
                                               const std::vector<std::size_t>& indices,
                                               const SeparationOptions& opts,
                                               std::uint64_t check_seed,
                                               std::uint64_t f_seed_a,
                                               std::uint64_t f_seed_b) {
  const auto F_a = pullback_frames(cascade, k, f_seed_a);
  const auto F_b = pullback_frames(cascade, k, f_seed_b);
  const std::size_t N = cascade.blocks();

  std::vector<SplittingEstimate> out;
  for (std::size_t idx : indices) {
    require(idx + 1 <= N && idx + 1 < E_check.frames.size(), ErrorCode::InvalidArgument,
            "separation: index beyond recorded horizon");
    SplittingEstimate s;
    s.point = cascade.states[idx];
    s.E_frame = cascade.Q[idx].leftCols(k);
    s.F_frame = F_a[idx];
    s.two_seed_gap_E = gap_distance(s.E_frame, E_check.frames[idx]);
    s.two_seed_gap_F = gap_distance(F_a[idx], F_b[idx]);
    if (s.two_seed_gap_E > opts.gap_tol)
      throw Error(ErrorCode::NotConverged,
                  "E bundle two-seed gap " + format_double(s.two_seed_gap_E));
    if (s.two_seed_gap_F > opts.gap_tol)
      throw Error(ErrorCode::NotConverged,
                  "F bundle two-seed gap " + format_double(s.two_seed_gap_F));

    // Growth rates over the remaining forward horizon.
    Vec sums = Vec::Zero(system.n);
    for (std::size_t i = idx; i < N; ++i)
      sums += cascade.R[i].diagonal().array().log().matrix();
    const double span = cascade.times[N] - cascade.times[idx];
    s.domination_margin = (sums(k - 1) - sums(k)) / span;

    // Push both frames one block forward and compare with the independent
    // estimates at the next point.
    Mat pushed_E(system.n, k);
    for (int j = 0; j < k; ++j) pushed_E.col(j) = cascade.push(idx, s.E_frame.col(j));
    Mat pushed_F(system.n, system.n - k);
    for (int j = 0; j < system.n - k; ++j) pushed_F.col(j) = cascade.push(idx, s.F_frame.col(j));
    s.invariance_residual =
        std::max(gap_distance(orthonormalize(pushed_E), E_check.frames[idx + 1]),
                 gap_distance(orthonormalize(pushed_F), F_b[idx + 1]));

    const Eigen::JacobiSVD<Mat> svd((Mat(system.n, system.n) << s.E_frame, s.F_frame).finished());
    require(svd.singularValues().minCoeff() > 1e-6, ErrorCode::IllConditioned,
            "separation: E and F nearly collinear");

    if (system.cone && system.cone->rank() == k) {
      s.cone_check = verify_cone_separation(s.E_frame, s.F_frame, *system.cone);
      s.cone_ok = s.cone_check.e_ok && s.cone_check.f_ok;
    }
    s.seeds[0] = cascade.seed;
    s.seeds[1] = check_seed;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Vec TangentCascade::push(std::size_t i, const Vec& v) const {
  return Q[i + 1] * (R[i].triangularView<Eigen::Upper>() * (Q[i].transpose() * v));
}

TangentCascade build_cascade(const SystemDef& system, const Vec& x0, double T,
                             const IntegratorConfig& cfg, std::uint64_t seed) {
  require(T > 0.0, ErrorCode::InvalidArgument, "build_cascade: T must be positive");
  Rng rng(seed);
  const Mat Q0 = random_frame(system.n, system.n, rng);
  Trajectory traj = integrate_with_tangent(system, x0, Q0, T, cfg, true);
  TangentCascade c;
  c.times = std::move(traj.times);
  c.states = std::move(traj.states);
  c.Q = std::move(traj.frames);
  c.R = std::move(traj.r_factors);
  c.seed = seed;
  return c;
}

std::vector<Mat> pullback_frames(const TangentCascade& cascade, int k,
                                 std::uint64_t seed) {
  const std::size_t N = cascade.blocks();
  require(N >= 1, ErrorCode::InvalidArgument, "pullback_frames: empty cascade");
  const Eigen::Index n = cascade.Q[0].rows();
  require(k >= 1 && k < n, ErrorCode::InvalidArgument, "pullback_frames: need 1 <= k < n");
  Rng rng(seed);
  std::vector<Mat> frames(N + 1);
  Mat W = random_frame(n, n - k, rng);
  frames[N] = W;
  for (std::size_t i = N; i-- > 0;) {
    // D_i^{-1} = Q_i R_i^{-1} Q_{i+1}^T
    const Mat B = cascade.Q[i + 1].transpose() * W;
    const Mat X = cascade.R[i].triangularView<Eigen::Upper>().solve(B);
    const double res = solve_residual(cascade.R[i], X, B);
    if (!(res <= kSolveResidualTol))
      throw Error(ErrorCode::IllConditioned,
                  "cascade solve residual " + format_double(res) + " at block " +
                      std::to_string(i));
    W = orthonormalize(cascade.Q[i] * X);
    frames[i] = W;
  }
  return frames;
}

Mat estimate_F_bundle(const TangentCascade& cascade, int k, std::size_t index,
                      const SeparationOptions& opts) {
  require(index <= cascade.blocks(), ErrorCode::InvalidArgument,
          "estimate_F_bundle: index out of range");
  const auto a = pullback_frames(cascade, k, derive_seed(opts.seed, 11));
  const auto b = pullback_frames(cascade, k, derive_seed(opts.seed, 12));
  const double gap = gap_distance(a[index], b[index]);
  if (gap > opts.gap_tol)
    throw Error(ErrorCode::NotConverged, "F bundle two-seed gap " + format_double(gap));
  return a[index];
}

std::vector<BundleSample> estimate_E_bundle(const SystemDef& system, const Vec& x0,
                                            int k, double T_warmup, double T_record,
                                            const IntegratorConfig& cfg,
                                            const SeparationOptions& opts) {
  check_k(system, k);
  require(T_warmup >= 0.0 && T_record >= 0.0 && T_warmup + T_record > 0.0,
          ErrorCode::InvalidArgument, "estimate_E_bundle: bad horizon");
  Rng rng_a(derive_seed(opts.seed, 1));
  Rng rng_b(derive_seed(opts.seed, 2));
  const double T = T_warmup + T_record;
  const Trajectory a =
      integrate_with_tangent(system, x0, random_frame(system.n, k, rng_a), T, cfg);
  const Trajectory b =
      integrate_with_tangent(system, x0, random_frame(system.n, k, rng_b), T, cfg);
  std::vector<BundleSample> out;
  const double t0 = T_warmup - 1e-9 * std::max(1.0, T);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.times[i] < t0) continue;
    const double gap = gap_distance(a.frames[i], b.frames[i]);
    if (gap > opts.gap_tol)
      throw Error(ErrorCode::NotConverged,
                  "E bundle two-seed gap " + format_double(gap) + " at t = " +
                      format_double(a.times[i]));
    out.push_back({a.times[i], a.states[i], a.frames[i]});
  }
  return out;
}

ConeSeparationCheck verify_cone_separation(const Mat& E, const Mat& F,
                                           const ConeSpec& cone) {
  const Eigen::Index n = cone.dim();
  require(E.rows() == n && F.rows() == n, ErrorCode::DimensionMismatch,
          "verify_cone_separation: dimension mismatch");
  require(E.cols() == cone.rank() && E.cols() + F.cols() == n, ErrorCode::RankMismatch,
          "verify_cone_separation: splitting rank differs from cone rank");
  ConeSeparationCheck c;
  if (cone.is_quadratic()) {
    const Mat& P = cone.quadratic().P;
    const Mat EPE = E.transpose() * P * E;
    const Mat FPF = F.transpose() * P * F;
    c.e_max_eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (EPE + EPE.transpose()),
                                                     Eigen::EigenvaluesOnly)
                      .eigenvalues()
                      .maxCoeff();
    c.f_min_eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (FPF + FPF.transpose()),
                                                     Eigen::EigenvaluesOnly)
                      .eigenvalues()
                      .minCoeff();
  } else {
    // Rank-1 orthant: E is a line, F a hyperplane with unit normal nu.
    const Vec e = E.col(0).normalized();
    c.e_max_eig = -std::max(e.minCoeff(), (-e).minCoeff());
    const Vec nu = Eigen::JacobiSVD<Mat>(F, Eigen::ComputeFullU).matrixU().col(n - 1);
    c.f_min_eig = std::max(nu.minCoeff(), (-nu).minCoeff());
  }
  c.e_ok = c.e_max_eig < -1e-10;
  c.f_ok = c.f_min_eig > 1e-10;
  return c;
}

SplittingEstimate estimate_splitting(const SystemDef& system, const Vec& x0, int k,
                                     double T_warmup, double T_forward,
                                     const IntegratorConfig& cfg,
                                     const SeparationOptions& opts) {
  return estimate_splittings_along(system, x0, k, T_warmup, cfg.qr_interval, 1,
                                   T_forward, cfg, opts)
      .front();
}

std::vector<SplittingEstimate> estimate_splittings_along(
    const SystemDef& system, const Vec& x0, int k, double T_warmup, double spacing,
    int count, double T_forward, const IntegratorConfig& cfg,
    const SeparationOptions& opts) {
  check_k(system, k);
  cfg.validate();
  require(count >= 1 && spacing > 0.0 && T_warmup >= 0.0 && T_forward >= cfg.qr_interval,
          ErrorCode::InvalidArgument, "estimate_splittings_along: bad horizon");
  const std::size_t first = block_index(T_warmup, cfg.qr_interval);
  const std::size_t stride = std::max<std::size_t>(1, block_index(spacing, cfg.qr_interval));
  require(std::abs(first * cfg.qr_interval - T_warmup) < 1e-9 * std::max(1.0, T_warmup) &&
              std::abs(stride * cfg.qr_interval - spacing) < 1e-9 * std::max(1.0, spacing),
          ErrorCode::InvalidArgument,
          "estimate_splittings_along: warmup and spacing must be multiples of qr_interval");
  const double T_total = T_warmup + spacing * (count - 1) + T_forward;

  const TangentCascade cascade =
      build_cascade(system, x0, T_total, cfg, derive_seed(opts.seed, 1));
  const std::uint64_t check_seed = derive_seed(opts.seed, 2);
  Rng rng_b(check_seed);
  const Trajectory check = integrate_with_tangent(
      system, x0, random_frame(system.n, k, rng_b),
      T_warmup + spacing * (count - 1) + cfg.qr_interval, cfg);

  std::vector<std::size_t> indices;
  for (int j = 0; j < count; ++j) indices.push_back(first + j * stride);
  return splittings_from(system, cascade, check, k, indices, opts, check_seed,
                         derive_seed(opts.seed, 11), derive_seed(opts.seed, 12));
}

Projection projections(const Mat& E, const Mat& F, const Vec& v) {
  require(E.rows() == v.size() && F.rows() == v.size() && E.cols() + F.cols() == v.size(),
          ErrorCode::DimensionMismatch, "projections: dimension mismatch");
  Mat M(v.size(), v.size());
  M << E, F;
  const Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec& sv = svd.singularValues();
  require(sv.minCoeff() > 1e-6 * std::max(1.0, sv.maxCoeff()), ErrorCode::IllConditioned,
          "projections: E and F nearly collinear");
  const Vec c = svd.solve(v);
  Projection p;
  p.P = E * c.head(E.cols());
  p.Q = v - p.P;
  return p;
}

Projection projections(const SplittingEstimate& split, const Vec& v) {
  return projections(split.E_frame, split.F_frame, v);
}

Mat projection_matrix(const Mat& E, const Mat& F) {
  const Eigen::Index n = E.rows();
  require(F.rows() == n && E.cols() + F.cols() == n, ErrorCode::DimensionMismatch,
          "projection_matrix: dimension mismatch");
  Mat M(n, n);
  M << E, F;
  const Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  require(svd.singularValues().minCoeff() > 1e-6, ErrorCode::IllConditioned,
          "projection_matrix: E and F nearly collinear");
  const Mat inv = svd.solve(Mat::Identity(n, n));
  return E * inv.topRows(E.cols());
}

LyapunovEstimate lyapunov_spectrum(const SystemDef& system, const Vec& x0, int m,
                                   double T, const IntegratorConfig& cfg,
                                   std::uint64_t seed, double align_fraction) {
  require(m >= 1 && m <= system.n, ErrorCode::InvalidArgument,
          "lyapunov_spectrum: need 1 <= m <= n");
  require(T > 0.0, ErrorCode::InvalidArgument, "lyapunov_spectrum: T must be positive");
  require(align_fraction >= 0.0 && align_fraction < 1.0, ErrorCode::InvalidArgument,
          "lyapunov_spectrum: align_fraction must lie in [0, 1)");
  Rng rng(seed);
  const Trajectory traj =
      integrate_with_tangent(system, x0, random_frame(system.n, m, rng), T, cfg);
  LyapunovEstimate est;
  est.seed = seed;
  // Blocks ending before align_fraction * T only rotate the frame onto the
  // dominant directions; averaging starts after them.
  const double t_align = align_fraction * T;
  std::size_t first = 0;
  while (first + 1 < traj.r_log.size() && traj.times[first + 1] <= t_align) ++first;
  est.T_align = traj.times[first];
  Vec sums = Vec::Zero(m);
  for (std::size_t i = first; i < traj.r_log.size(); ++i) {
    sums += traj.r_log[i];
    Vec running = sums / (traj.times[i + 1] - est.T_align);
    std::sort(running.data(), running.data() + m, std::greater<>());
    est.history.push_back(std::move(running));
  }
  est.T_total = traj.times.back();
  est.exponents.assign(est.history.back().data(), est.history.back().data() + m);
  est.k_lyapunov = est.exponents.back();

  const std::size_t half = est.history.size() / 2;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = half; i < est.history.size(); ++i) {
    lo = std::min(lo, est.history[i](m - 1));
    hi = std::max(hi, est.history[i](m - 1));
  }
  est.late_oscillation = hi - lo;
  est.cauchy = est.late_oscillation <= 0.05;
  return est;
}

LyapunovEstimate k_lyapunov(const SystemDef& system, const Vec& x0, int k, double T,
                            const IntegratorConfig& cfg, std::uint64_t seed,
                            double align_fraction) {
  check_k(system, k);
  return lyapunov_spectrum(system, x0, k, T, cfg, seed, align_fraction);
}

double domination_margin(const SystemDef& system, const Vec& x0, int k, double T,
                         const IntegratorConfig& cfg, std::uint64_t seed) {
  check_k(system, k);
  const LyapunovEstimate est = lyapunov_spectrum(system, x0, k + 1, T, cfg, seed);
  return est.exponents[k - 1] - est.exponents[k];
}

double restricted_growth_rate(const TangentCascade& cascade,
                              const std::vector<Mat>& F_frames, int k,
                              std::size_t i0, std::size_t i1, const Vec& w) {
  require(i0 < i1 && i1 <= cascade.blocks() && F_frames.size() > i1,
          ErrorCode::InvalidArgument, "restricted_growth_rate: bad index range");
  require(w.norm() > 0.0, ErrorCode::InvalidArgument, "restricted_growth_rate: zero vector");
  Vec u = projections(cascade.Q[i0].leftCols(k), F_frames[i0], w).Q;
  double log_growth = std::log(u.norm() / w.norm());
  u.normalize();
  for (std::size_t i = i0; i < i1; ++i) {
    const Vec pushed = cascade.push(i, u);
    u = projections(cascade.Q[i + 1].leftCols(k), F_frames[i + 1], pushed).Q;
    const double norm = u.norm();
    require(norm > 0.0 && std::isfinite(norm), ErrorCode::NonFiniteState,
            "restricted_growth_rate: degenerate propagation");
    log_growth += std::log(norm);
    u /= norm;
  }
  return log_growth / (cascade.times[i1] - cascade.times[i0]);
}

SeparationConstants estimate_constants(const std::vector<SplittingEstimate>& splits,
                                       const ConeSpec& cone, int samples_per_split,
                                       std::uint64_t seed) {
  require(!splits.empty(), ErrorCode::EmptySample, "estimate_constants: no splittings");
  require(samples_per_split >= 1, ErrorCode::InvalidArgument,
          "estimate_constants: need at least one sample per splitting");
  std::optional<ConeSpec> complement;
  if (cone.is_quadratic()) complement = make_quadratic_cone(-cone.quadratic().P);

  Rng rng(seed);
  SeparationConstants c;
  c.delta_prime = std::numeric_limits<double>::infinity();
  c.delta_double_prime = std::numeric_limits<double>::infinity();
  for (const auto& s : splits) {
    require(s.cone_ok, ErrorCode::InvalidArgument,
            "estimate_constants: splitting is not cone compatible");
    const auto k = s.E_frame.cols();
    const auto m = s.F_frame.cols();
    for (int i = 0; i < samples_per_split; ++i) {
      const Vec e = s.E_frame * random_unit(k, rng);
      // Radius of the largest ball around e inside Int C.
      const double d_in =
          complement ? distance_to_cone(*complement, e) : e.cwiseAbs().minCoeff();
      c.delta_prime = std::min(c.delta_prime, d_in);
      const Vec f = s.F_frame * random_unit(m, rng);
      c.delta_double_prime = std::min(c.delta_double_prime, distance_to_cone(cone, f));
      ++c.samples;
    }
    const Mat Pm = projection_matrix(s.E_frame, s.F_frame);
    c.projection_bound =
        std::max(c.projection_bound, Eigen::JacobiSVD<Mat>(Pm).singularValues()(0));
  }
  c.delta3 = 1.0 / c.delta_double_prime;
  c.C1 = 2.0 / c.delta_prime;
  c.projection_bound_ok = c.projection_bound <= 1.0 / c.delta_prime;
  return c;
}

nlohmann::json splitting_report(const SplittingEstimate& split,
                                const SeparationConstants* constants) {
  nlohmann::json j;
  j["point"] = vec_to_json(split.point);
  j["E_frame"] = mat_to_json(split.E_frame);
  j["F_frame"] = mat_to_json(split.F_frame);
  j["margins"] = {{"domination", split.domination_margin},
                  {"invariance_residual", split.invariance_residual},
                  {"two_seed_gap_E", split.two_seed_gap_E},
                  {"two_seed_gap_F", split.two_seed_gap_F},
                  {"E_max_eig", split.cone_check.e_max_eig},
                  {"F_min_eig", split.cone_check.f_min_eig}};
  j["cone_ok"] = split.cone_ok;
  if (constants) {
    j["constants"] = {{"delta_prime", constants->delta_prime},
                      {"delta_double_prime", constants->delta_double_prime},
                      {"delta3", constants->delta3},
                      {"C1", constants->C1},
                      {"projection_bound", constants->projection_bound},
                      {"projection_bound_ok", constants->projection_bound_ok},
                      {"samples", constants->samples}};
  } else {
    j["constants"] = nullptr;
  }
  j["seeds"] = {split.seeds[0], split.seeds[1]};
  return j;
}

}  // namespace kcone
