#include "kcone/cone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace kcone {

int ConeSpec::dim() const {
  return std::visit(
      [](const auto& c) -> int {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, QuadraticCone>)
          return static_cast<int>(c.P.rows());
        else
          return c.n;
      },
      cone_);
}

int ConeSpec::rank() const {
  if (const auto* q = std::get_if<QuadraticCone>(&cone_)) return q->rank_k;
  return 1;
}

const QuadraticCone& ConeSpec::quadratic() const {
  const auto* q = std::get_if<QuadraticCone>(&cone_);
  require(q != nullptr, ErrorCode::InvalidArgument,
          "operation requires a quadratic cone");
  return *q;
}

ConeSpec make_quadratic_cone(const Mat& P) {
  require(P.rows() == P.cols() && P.rows() > 0, ErrorCode::DimensionMismatch,
          "cone matrix must be square");
  const double scale = std::max(P.cwiseAbs().maxCoeff(), 1e-300);
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-10 * scale, ErrorCode::NotSymmetric,
          "cone matrix is not symmetric");

  Mat sym = 0.5 * (P + P.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  const Vec& d = eig.eigenvalues();
  const double norm = d.cwiseAbs().maxCoeff();
  require(d.cwiseAbs().minCoeff() >= 1e-10 * norm, ErrorCode::NearSingular,
          "cone matrix is numerically singular");

  QuadraticCone q;
  q.P = sym;
  q.eigenvalues = d;
  q.eigenvectors = eig.eigenvectors();
  q.rank_k = static_cast<int>((d.array() < 0.0).count());
  require(q.rank_k >= 1 && q.rank_k < sym.rows(), ErrorCode::DegenerateSignature,
          "cone matrix must have both negative and positive eigenvalues");
  return ConeSpec(std::move(q));
}

ConeSpec make_orthant_cone(int n) {
  require(n >= 1, ErrorCode::InvalidArgument, "orthant dimension must be >= 1");
  return ConeSpec(OrthantCone{n});
}

MembershipVerdict membership(const ConeSpec& cone, const Vec& x, double tol) {
  require(x.size() == cone.dim(), ErrorCode::DimensionMismatch,
          "vector dimension does not match cone");
  const double nx = x.norm();
  if (nx == 0.0) return {Membership::Boundary, 0.0};

  double margin = 0.0;
  if (cone.is_quadratic()) {
    const Mat& P = cone.quadratic().P;
    margin = x.dot(P * x) / (nx * nx);
  } else {
    // Depth of the better of the two sign choices, normalized by |x|.
    const double pos = x.minCoeff();
    const double neg = (-x).minCoeff();
    margin = -std::max(pos, neg) / nx;
  }
  if (margin < -tol) return {Membership::Interior, margin};
  if (margin > tol) return {Membership::Outside, margin};
  return {Membership::Boundary, margin};
}

Order ordered(const ConeSpec& cone, const Vec& x, const Vec& y, double tol) {
  require(x.size() == y.size(), ErrorCode::DimensionMismatch,
          "ordered: dimension mismatch");
  switch (membership(cone, x - y, tol).kind) {
    case Membership::Interior:
      return Order::StronglyOrdered;
    case Membership::Boundary:
      return Order::Ordered;
    default:
      return Order::Unordered;
  }
}

namespace {

// Projection of v onto C^-(P). Works in the eigenbasis y = V^T v with
// eigenvalues d; the minimizer is w = (I + mu P)^{-1} v for a multiplier
// mu in (0, 1/|d_min|].
double quadratic_distance(const QuadraticCone& q, const Vec& v) {
  const Vec y = q.eigenvectors.transpose() * v;
  const Vec& d = q.eigenvalues;
  const double form = (d.array() * y.array().square()).sum();
  if (form <= 0.0) return 0.0;

  const double dmin = d.minCoeff();  // most negative
  const double mu_max = 1.0 / std::abs(dmin);
  auto g = [&](double mu) {
    return (d.array() * y.array().square() /
            (1.0 + mu * d.array()).square())
        .sum();
  };

  // Components in the eigenspace of d_min decide whether g reaches zero
  // before the pole at mu_max.
  const double tie = 1e-12 * d.cwiseAbs().maxCoeff();
  double ymin2 = 0.0;
  double g_rest = 0.0;  // g at mu_max without the d_min eigenspace
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (std::abs(d(i) - dmin) <= tie) {
      ymin2 += y(i) * y(i);
    } else {
      g_rest += d(i) * y(i) * y(i) / std::pow(1.0 + mu_max * d(i), 2);
    }
  }

  if (ymin2 <= 1e-28 * y.squaredNorm() && g_rest >= 0.0) {
    // Degenerate case: multiplier sits at the pole and the d_min eigenspace
    // component of w is fixed by the boundary equation alone.
    double dist2 = 0.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (std::abs(d(i) - dmin) <= tie) continue;
      const double wi = y(i) / (1.0 + mu_max * d(i));
      dist2 += std::pow(y(i) - wi, 2);
    }
    dist2 += g_rest / std::abs(dmin);
    return std::sqrt(dist2);
  }

  double lo = 0.0;
  double hi = mu_max;
  constexpr int kMaxIter = 400;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket is one ulp wide
    if (g(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  // hi never moved: g stayed positive up to the pole, so no root was bracketed.
  require(hi < mu_max && iter < kMaxIter, ErrorCode::NoConvergence,
          "distance_to_cone: bisection did not bracket the boundary");
  const double mu = 0.5 * (lo + hi);
  const Vec w = (y.array() / (1.0 + mu * d.array())).matrix();
  return (y - w).norm();
}

}  // namespace

double distance_to_cone(const ConeSpec& cone, const Vec& v) {
  require(v.size() == cone.dim(), ErrorCode::DimensionMismatch,
          "vector dimension does not match cone");
  if (cone.is_quadratic()) return quadratic_distance(cone.quadratic(), v);
  const double to_pos = v.cwiseMin(0.0).norm();
  const double to_neg = v.cwiseMax(0.0).norm();
  return std::min(to_pos, to_neg);
}

void require_orthonormal(const Mat& L, double tol) {
  require(L.cols() >= 1 && L.cols() <= L.rows(), ErrorCode::NonOrthonormalFrame,
          "frame must have between 1 and n columns");
  const Mat G = L.transpose() * L - Mat::Identity(L.cols(), L.cols());
  require(G.cwiseAbs().maxCoeff() <= tol, ErrorCode::NonOrthonormalFrame,
          "frame is not orthonormal");
}

namespace {

// sup over unit v in span(from) of the distance to the unit sphere of
// span(to): sqrt(2 - 2 min_v |proj_to v|).
double one_sided_gap(const Mat& from, const Mat& to) {
  double smallest = 0.0;
  if (from.cols() <= to.cols()) {
    const Mat M = to.transpose() * from;
    Eigen::JacobiSVD<Mat> svd(M);
    smallest = std::min(1.0, svd.singularValues().minCoeff());
  }
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * smallest));
}

}  // namespace

double gap_distance(const Mat& L1, const Mat& L2) {
  require(L1.rows() == L2.rows(), ErrorCode::DimensionMismatch,
          "gap_distance: ambient dimensions differ");
  require_orthonormal(L1);
  require_orthonormal(L2);
  return std::max(one_sided_gap(L1, L2), one_sided_gap(L2, L1));
}

const char* to_string(Membership m) {
  switch (m) {
    case Membership::Interior:
      return "Interior";
    case Membership::Boundary:
      return "Boundary";
    case Membership::Outside:
      return "Outside";
  }
  return "?";
}

const char* to_string(Order o) {
  switch (o) {
    case Order::StronglyOrdered:
      return "StronglyOrdered";
    case Order::Ordered:
      return "Ordered";
    case Order::Unordered:
      return "Unordered";
  }
  return "?";
}

void to_json(nlohmann::json& j, const ConeSpec& cone) {
  if (cone.is_quadratic()) {
    const Mat& P = cone.quadratic().P;
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < P.cols(); ++c) row.push_back(P(r, c));
      rows.push_back(std::move(row));
    }
    j = {{"type", "quadratic"}, {"P", std::move(rows)}};
  } else {
    j = {{"type", "orthant"}, {"n", cone.dim()}};
  }
}

ConeSpec cone_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("type") && j["type"].is_string(),
          ErrorCode::ConfigError, "cone: expected object with string 'type'");
  const std::string type = j["type"];
  if (type == "orthant") {
    for (const auto& [key, _] : j.items())
      require(key == "type" || key == "n", ErrorCode::ConfigError,
              "cone: unknown key '" + key + "'");
    require(j.contains("n") && j["n"].is_number_integer(), ErrorCode::ConfigError,
            "cone: orthant requires integer 'n'");
    return make_orthant_cone(j["n"].get<int>());
  }
  require(type == "quadratic", ErrorCode::ConfigError,
          "cone: unknown type '" + type + "'");
  for (const auto& [key, _] : j.items())
    require(key == "type" || key == "P", ErrorCode::ConfigError,
            "cone: unknown key '" + key + "'");
  require(j.contains("P") && j["P"].is_array() && !j["P"].empty(),
          ErrorCode::ConfigError, "cone: quadratic requires matrix 'P'");
  const auto& rows = j["P"];
  const auto n = static_cast<Eigen::Index>(rows.size());
  Mat P(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    require(rows[r].is_array() && static_cast<Eigen::Index>(rows[r].size()) == n,
            ErrorCode::ConfigError, "cone: P must be square");
    for (Eigen::Index c = 0; c < n; ++c) {
      require(rows[r][c].is_number(), ErrorCode::ConfigError,
              "cone: P entries must be numbers");
      P(r, c) = rows[r][c].get<double>();
    }
  }
  return make_quadratic_cone(P);
}

}  // namespace kcone
