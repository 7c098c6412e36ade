#include "kcone/cooperativity.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "kcone/json_io.hpp"
#include "kcone/parallel.hpp"
#include "kcone/random.hpp"

namespace kcone {
namespace {

const Mat& quadratic_P(const ConeSpec& cone, const char* where) {
  require(cone.is_quadratic(), ErrorCode::InvalidArgument,
          std::string(where) + ": quadratic cone required");
  return cone.quadratic().P;
}

double spectral_norm(const Mat& M) {
  return Eigen::JacobiSVD<Mat>(M).singularValues()(0);
}

Mat jacobian_at(const SystemDef& system, const Vec& x) {
  try {
    return system.DF(x);
  } catch (const Error& e) {
    std::string where = "[";
    for (Eigen::Index i = 0; i < x.size(); ++i)
      where += (i ? "," : "") + format_double(x(i));
    throw Error(e.code(), std::string(e.what()) + " at x = " + where + "]");
  }
}

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

constexpr std::array<std::uint64_t, 32> kPrimes = {
    2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41, 43,  47,  53,
    59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131};

// Rescales the negative and positive eigen-parts of v so the form vanishes.
// Returns nullopt when one part is absent.
std::optional<Vec> to_boundary(const QuadraticCone& q, const Vec& v) {
  Vec y = q.eigenvectors.transpose() * v;
  double neg = 0.0;
  double pos = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    (q.eigenvalues(i) < 0.0 ? neg : pos) += std::abs(q.eigenvalues(i)) * y(i) * y(i);
  if (!(neg > 0.0 && pos > 0.0)) return std::nullopt;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) /= std::sqrt(q.eigenvalues(i) < 0.0 ? neg : pos);
  return (q.eigenvectors * y).normalized();
}

}  // namespace

double lmi_value(const Mat& P, const Mat& J, double lambda) {
  require(P.rows() == J.rows() && P.cols() == J.cols() && P.rows() == P.cols(),
          ErrorCode::DimensionMismatch, "lmi_value: dimension mismatch");
  const Mat S = P * J + J.transpose() * P + lambda * P;
  const Mat sym = 0.5 * (S + S.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(sym, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

double lmi_value(const SystemDef& system, const ConeSpec& cone, const Vec& x, double lambda) {
  return lmi_value(quadratic_P(cone, "lmi_value"), jacobian_at(system, x), lambda);
}

double lmi_tolerance(const Mat& P, const Mat& J) {
  return 1e-9 * spectral_norm(P) * spectral_norm(J);
}

std::pair<double, double> default_lambda_bracket(const Mat& P, const Mat& J) {
  const Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (P + P.transpose()),
                                               Eigen::EigenvaluesOnly);
  const double pmin = eig.eigenvalues().minCoeff();
  const double pmax = eig.eigenvalues().maxCoeff();
  require(pmin < 0.0 && pmax > 0.0, ErrorCode::DegenerateSignature,
          "default_lambda_bracket: P must be indefinite");
  const Mat S0 = P * J + J.transpose() * P;
  const double s = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (S0 + S0.transpose()),
                                                      Eigen::EigenvaluesOnly)
                       .eigenvalues()
                       .cwiseAbs()
                       .maxCoeff();
  // value(l) >= l * pmax - s for l > 0, so minimizers satisfy l <= 2 s / pmax;
  // likewise on the negative side.
  return {-(3.0 * s / -pmin + 1.0), 3.0 * s / pmax + 1.0};
}

LambdaResult minimize_lmi(const Mat& P, const Mat& J, double lo, double hi) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, ErrorCode::InvalidArgument,
          "find_lambda: bracket must be finite with lo < hi");
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = lmi_value(P, J, c);
  double fd = lmi_value(P, J, d);
  for (int it = 0; it < 400 && b - a > 1e-12 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = lmi_value(P, J, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = lmi_value(P, J, d);
    }
  }
  const double l = 0.5 * (a + b);
  const double edge = 1e-9 * (hi - lo);
  if (l - lo < edge || hi - l < edge)
    throw Error(ErrorCode::BracketTooNarrow,
                "find_lambda: minimizer at bracket end " + format_double(l));
  return {l, lmi_value(P, J, l)};
}

LambdaResult find_lambda(const SystemDef& system, const ConeSpec& cone, const Vec& x,
                         std::optional<std::pair<double, double>> bracket) {
  const Mat& P = quadratic_P(cone, "find_lambda");
  const Mat J = jacobian_at(system, x);
  const auto [lo, hi] = bracket ? *bracket : default_lambda_bracket(P, J);
  return minimize_lmi(P, J, lo, hi);
}

Sampler sampler_from_string(const std::string& name) {
  if (name == "uniform") return Sampler::Uniform;
  if (name == "halton" || name == "low-discrepancy") return Sampler::Halton;
  if (name == "grid") return Sampler::Grid;
  throw Error(ErrorCode::ConfigError, "unknown sampler '" + name + "'");
}

const char* to_string(Sampler s) {
  switch (s) {
    case Sampler::Uniform:
      return "uniform";
    case Sampler::Halton:
      return "halton";
    case Sampler::Grid:
      return "grid";
  }
  return "?";
}

std::vector<Vec> sample_box(const Box& box, int count, Sampler sampler, std::uint64_t seed) {
  require(count >= 1, ErrorCode::InvalidArgument, "sample_box: count must be positive");
  const Eigen::Index n = box.dim();
  std::vector<Vec> out;
  switch (sampler) {
    case Sampler::Uniform: {
      Rng rng(seed);
      for (int i = 0; i < count; ++i) out.push_back(random_in_box(box, rng));
      break;
    }
    case Sampler::Halton: {
      require(n <= static_cast<Eigen::Index>(kPrimes.size()), ErrorCode::InvalidArgument,
              "sample_box: Halton sampler supports at most 32 dimensions");
      for (int i = 0; i < count; ++i) {
        Vec x(n);
        for (Eigen::Index d = 0; d < n; ++d)
          x(d) = box.lo(d) +
                 radical_inverse(static_cast<std::uint64_t>(i) + 1, kPrimes[d]) *
                     (box.hi(d) - box.lo(d));
        out.push_back(std::move(x));
      }
      break;
    }
    case Sampler::Grid: {
      const int m = std::max(
          2, static_cast<int>(std::lround(std::pow(count, 1.0 / static_cast<double>(n)))));
      std::vector<int> idx(n, 0);
      for (;;) {
        Vec x(n);
        for (Eigen::Index d = 0; d < n; ++d)
          x(d) = box.lo(d) + (box.hi(d) - box.lo(d)) * idx[d] / (m - 1.0);
        out.push_back(std::move(x));
        Eigen::Index d = 0;
        while (d < n && ++idx[d] == m) idx[d++] = 0;
        if (d == n) break;
      }
      break;
    }
  }
  return out;
}

LmiReport check_region(const SystemDef& system, const ConeSpec& cone, const Box& box,
                       const RegionOptions& opts) {
  const Mat& P = quadratic_P(cone, "check_region");
  require(box.dim() == system.n && cone.dim() == system.n, ErrorCode::DimensionMismatch,
          "check_region: dimension mismatch");
  LmiReport report;
  const auto points = sample_box(box, opts.n_samples, opts.sampler, opts.seed);
  report.samples.resize(points.size());
  parallel_for(points.size(), opts.jobs, [&](std::size_t i) {
    const Mat J = jacobian_at(system, points[i]);
    const auto [lo, hi] = opts.bracket ? *opts.bracket : default_lambda_bracket(P, J);
    const LambdaResult r = minimize_lmi(P, J, lo, hi);
    report.samples[i] = {points[i], r.lambda_star, r.value, r.value < -lmi_tolerance(P, J)};
  });
  // Serial reduction in sample order.
  std::size_t feasible = 0;
  report.worst_value = -std::numeric_limits<double>::infinity();
  for (const auto& s : report.samples) {
    feasible += s.feasible ? 1 : 0;
    if (s.max_eig > report.worst_value) {
      report.worst_value = s.max_eig;
      report.worst_point = s.x;
      report.worst_lambda = s.lambda_star;
    }
  }
  report.fraction_feasible =
      static_cast<double>(feasible) / static_cast<double>(report.samples.size());
  return report;
}

UniformReport check_smith_uniform(const SystemDef& system, const ConeSpec& cone,
                                  const Box& box, double lambda, double eps,
                                  const RegionOptions& opts) {
  const Mat& P = quadratic_P(cone, "check_smith_uniform");
  require(eps > 0.0, ErrorCode::InvalidArgument, "check_smith_uniform: eps must be positive");
  const auto points = sample_box(box, opts.n_samples, opts.sampler, opts.seed);
  std::vector<double> values(points.size());
  std::vector<double> tols(points.size());
  parallel_for(points.size(), opts.jobs, [&](std::size_t i) {
    const Mat J = jacobian_at(system, points[i]);
    values[i] = lmi_value(P, J, lambda);
    tols[i] = lmi_tolerance(P, J);
  });
  UniformReport r;
  r.ok = true;
  r.samples = static_cast<int>(points.size());
  r.worst_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    r.ok = r.ok && values[i] <= -eps + tols[i];
    if (values[i] > r.worst_value) {
      r.worst_value = values[i];
      r.worst_point = points[i];
    }
  }
  return r;
}

std::vector<Vec> boundary_vectors(const ConeSpec& cone, int count, std::uint64_t seed) {
  const QuadraticCone& q = cone.quadratic();
  const Eigen::Index n = q.P.rows();
  const int k = q.rank_k;
  Rng rng(seed);
  std::vector<Vec> out;
  for (int c = 0; c < count; ++c) {
    const Vec a = random_unit(k, rng);
    const Vec b = random_unit(n - k, rng);
    Vec y(n);
    y << a, b;  // eigenvalues ascending: negatives first
    out.push_back(*to_boundary(q, q.eigenvectors * y));
  }
  return out;
}

PqInvarianceReport check_cone_invariance_pq(const SystemDef& system, const ConeSpec& cone,
                                            const Vec& p, const Vec& q, double T,
                                            int n_boundary, const IntegratorConfig& cfg,
                                            const PqOptions& opts) {
  const Mat& P = quadratic_P(cone, "check_cone_invariance_pq");
  require(T > 0.0 && n_boundary >= 1, ErrorCode::InvalidArgument,
          "check_cone_invariance_pq: need T > 0 and at least one boundary vector");
  const QuadraticCone& qc = cone.quadratic();
  const FundamentalPath path =
      fundamental_pq_path(system, p, q, T, cfg, opts.quad_points, opts.sample_interval);
  const Quadrature rule = gauss_legendre(opts.quad_points);
  const auto boundary = boundary_vectors(cone, n_boundary, opts.seed);
  const double p_norm = spectral_norm(P);

  PqInvarianceReport r;
  r.worst_flux = -std::numeric_limits<double>::infinity();
  r.worst_interior_margin = -std::numeric_limits<double>::infinity();
  bool flux_ok = true;
  bool interior_ok = true;
  for (std::size_t s = 0; s < path.times.size(); ++s) {
    const Mat A = averaged_jacobian(system, path.p_states[s], path.q_states[s], rule);
    const Mat PA = P * A + A.transpose() * P;
    const double scale = p_norm * spectral_norm(A);
    for (const Vec& u : boundary) {
      const Vec ut = path.U[s] * u;
      const Vec ub = to_boundary(qc, ut).value_or(u);
      const double flux = ub.dot(PA * ub);
      const double normalized = scale > 0.0 ? flux / scale : flux;
      r.worst_flux = std::max(r.worst_flux, normalized);
      flux_ok = flux_ok && scale > 0.0 && normalized < -1e-12;
      ++r.flux_tests;
      if (path.times[s] > opts.t_min) {
        const MembershipVerdict v = membership(cone, ut);
        r.worst_interior_margin = std::max(r.worst_interior_margin, v.margin);
        interior_ok = interior_ok && v.kind == Membership::Interior;
        ++r.propagation_tests;
      }
    }
  }
  r.flux_ok = flux_ok;
  r.propagation_ok = interior_ok && r.propagation_tests > 0;
  return r;
}

ConeSearchResult search_diagonal_cone(const SystemDef& system, int k,
                                      const std::vector<double>& magnitudes,
                                      const RegionOptions& opts) {
  const int n = system.n;
  require(k >= 1 && k < n && !magnitudes.empty(), ErrorCode::InvalidArgument,
          "search_diagonal_cone: need 1 <= k < n and magnitudes");
  ConeSearchResult best;
  const auto m = static_cast<int>(magnitudes.size());
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (std::popcount(mask) != k) continue;
    std::vector<int> idx(n - 1, 0);
    for (;;) {
      Vec diag(n);
      for (int i = 0; i < n; ++i) {
        const double mag = i == 0 ? 1.0 : magnitudes[idx[i - 1]];
        diag(i) = (mask >> i & 1u) ? -mag : mag;
      }
      const ConeSpec cone = make_quadratic_cone(diag.asDiagonal().toDenseMatrix());
      const LmiReport rep = check_region(system, cone, system.domain_box, opts);
      ++best.candidates;
      if (rep.fraction_feasible > best.best_fraction || best.best_diagonal.size() == 0) {
        best.best_fraction = rep.fraction_feasible;
        best.best_diagonal = diag;
      }
      if (rep.fraction_feasible == 1.0) {
        best.cone = cone;
        return best;
      }
      int d = 0;
      while (d < n - 1 && ++idx[d] == m) idx[d++] = 0;
      if (d == n - 1) break;
    }
  }
  return best;
}

nlohmann::json to_json(const LmiReport& report) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples)
    samples.push_back({{"x", vec_to_json(s.x)},
                       {"lambda_star", s.lambda_star},
                       {"max_eig", s.max_eig},
                       {"feasible", s.feasible}});
  return {{"samples", samples},
          {"aggregate",
           {{"fraction_feasible", report.fraction_feasible},
            {"worst_point", vec_to_json(report.worst_point)},
            {"worst_value", report.worst_value},
            {"worst_lambda", report.worst_lambda}}},
          {"note", "lambda(x) is a pointwise table; continuity of the induced multiplier is not checked"}};
}

void write_lmi_csv(std::ostream& os, const LmiReport& report) {
  const Eigen::Index n = report.samples.empty() ? 0 : report.samples.front().x.size();
  for (Eigen::Index i = 0; i < n; ++i) os << 'x' << i + 1 << ',';
  os << "lambda_star,max_eig,feasible\n";
  for (const auto& s : report.samples) {
    for (Eigen::Index i = 0; i < n; ++i) os << format_double(s.x(i)) << ',';
    os << format_double(s.lambda_star) << ',' << format_double(s.max_eig) << ','
       << (s.feasible ? 1 : 0) << '\n';
  }
}

}  // namespace kcone
