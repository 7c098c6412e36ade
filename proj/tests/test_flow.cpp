#include <doctest.h>

#include <cmath>
#include <sstream>

#include "kcone/flow.hpp"
#include "kcone/random.hpp"
#include "kcone/systems.hpp"
#include "oracles.hpp"

using namespace kcone;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

Mat random_matrix(int n, Rng& rng, double scale) {
  Mat A(n, n);
  for (int i = 0; i < n; ++i) A.col(i) = scale * random_gaussian(n, rng);
  return A;
}

}  // namespace

TEST_CASE("linear flows match the matrix exponential") {
  Rng rng(3);
  for (int n : {2, 3, 5}) {
    const Mat A = random_matrix(n, rng, 0.4);
    const SystemDef sys = linear_system(A);
    const Vec x0 = random_gaussian(n, rng);
    const Vec exact = oracle::expm(2.0 * A) * x0;
    const Vec rk = flow_to(sys, x0, 2.0, rk4_config(1e-3));
    const Vec dp = flow_to(sys, x0, 2.0, IntegratorConfig{});
    CHECK((rk - exact).norm() < 1e-9 * (1 + exact.norm()));
    CHECK((dp - exact).norm() < 1e-8 * (1 + exact.norm()));
  }
}

TEST_CASE("RK4 is fourth order") {
  Rng rng(4);
  const Mat A = random_matrix(3, rng, 0.8);
  const SystemDef sys = linear_system(A);
  const Vec x0 = random_gaussian(3, rng);
  const Vec exact = oracle::expm(A) * x0;
  const double e1 = (flow_to(sys, x0, 1.0, rk4_config(0.1)) - exact).norm();
  const double e2 = (flow_to(sys, x0, 1.0, rk4_config(0.05)) - exact).norm();
  CHECK(std::log2(e1 / e2) == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("sampling and time reversal") {
  const SystemDef sys = linear_diag((Vec(2) << -1.0, 0.5).finished());
  IntegratorConfig cfg = rk4_config(0.01);
  cfg.sample_interval = 0.25;
  const Trajectory fwd = integrate(sys, Vec::Ones(2), 1.0, cfg);
  REQUIRE(fwd.size() == 5);
  CHECK(fwd.times.back() == doctest::Approx(1.0));
  CHECK(fwd.states[2](0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-9));

  const Trajectory back = integrate(sys, fwd.back(), -1.0, cfg);
  CHECK(back.times.back() == doctest::Approx(-1.0));
  CHECK((back.back() - Vec::Ones(2)).norm() < 1e-9);
}

TEST_CASE("integrator failures") {
  const SystemDef blow = linear_diag(Vec::Constant(2, 30.0));
  CHECK(code_of([&] { flow_to(blow, Vec::Ones(2), 5.0, rk4_config(0.01)); }) ==
        ErrorCode::NonFiniteState);
  IntegratorConfig few = rk4_config(0.01);
  few.max_steps = 10;
  CHECK(code_of([&] { flow_to(blow, Vec::Ones(2), 1.0, few); }) ==
        ErrorCode::StepLimitExceeded);
  CHECK(code_of([&] { flow_to(blow, Vec::Ones(3), 1.0, few); }) ==
        ErrorCode::DimensionMismatch);
  IntegratorConfig bad;
  bad.h = -1.0;
  bad.method = Method::RK4;
  CHECK(code_of([&] { bad.validate(); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("finite-difference Jacobian agrees with analytic ones") {
  Rng rng(8);
  for (const SystemDef& sys : {smith_oscillator(4), cooperative_hirsch(3), cyclic_feedback(3, 1.0, 8.0)}) {
    REQUIRE(sys.has_analytic_jacobian());
    for (int trial = 0; trial < 5; ++trial) {
      const Vec x = random_in_box(sys.domain_box, rng) * 0.5;
      const Mat fd = finite_difference_jacobian(sys.field, x);
      CHECK((fd - sys.DF(x)).norm() < 1e-6 * (1 + sys.DF(x).norm()));
    }
  }
}

TEST_CASE("tangent integration tracks the linear flow") {
  const Vec d = (Vec(4) << 2.0, 1.0, -1.0, -2.0).finished();
  const SystemDef sys = linear_diag(d);
  IntegratorConfig cfg = rk4_config(0.01);
  cfg.qr_interval = 0.5;
  Rng rng(12);
  const Mat Q0 = random_frame(4, 2, rng);
  const Trajectory t = integrate_with_tangent(sys, Vec::Zero(4), Q0, 20.0, cfg, true);
  CHECK(t.r_log.size() == 40);
  CHECK(t.r_factors.size() == 40);
  // Orthonormal frames throughout.
  for (const Mat& Q : t.frames) CHECK((Q.transpose() * Q - Mat::Identity(2, 2)).norm() < 1e-12);
  // Once the frame has aligned, log R per unit time gives the top two rates.
  Vec sum = Vec::Zero(2);
  for (std::size_t i = 20; i < t.r_log.size(); ++i) sum += t.r_log[i];
  CHECK(sum(0) / 10.0 == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sum(1) / 10.0 == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("Gauss-Legendre rule") {
  for (int m = 2; m <= 6; ++m) {
    const Quadrature q = gauss_legendre(m);
    CHECK(q.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    // Exact through degree 2m - 1.
    for (int deg = 0; deg < 2 * m; ++deg) {
      double s = 0;
      for (int i = 0; i < m; ++i) s += q.weights(i) * std::pow(q.nodes(i), deg);
      CHECK(s == doctest::Approx(1.0 / (deg + 1)).epsilon(1e-12));
    }
  }
  CHECK(code_of([] { gauss_legendre(0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("averaged Jacobian") {
  const SystemDef lin = linear_system((Mat(2, 2) << 0, 1, -1, 0).finished());
  const Mat A = averaged_jacobian(lin, Vec::Ones(2), Vec::Zero(2), gauss_legendre(4));
  CHECK((A - lin.DF(Vec::Zero(2))).norm() < 1e-14);

  // Mean value identity: F(p) - F(q) = A^{pq} (p - q).
  const SystemDef sys = smith_oscillator(4);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec p = random_gaussian(4, rng);
    const Vec q = random_gaussian(4, rng);
    const Mat Apq = averaged_jacobian(sys, p, q, gauss_legendre(4));
    CHECK((sys.F(p) - sys.F(q) - Apq * (p - q)).norm() < 1e-10 * (1 + (p - q).norm()));
  }
}

TEST_CASE("pq fundamental matrix maps differences") {
  const SystemDef sys = smith_oscillator(4);
  const Vec p = (Vec(4) << 1.0, 0.5, 0.1, 0.0).finished();
  const Vec q = (Vec(4) << 1.2, 0.3, 0.0, 0.2).finished();
  const IntegratorConfig cfg = rk4_config(1e-3);
  const Mat U = fundamental_pq(sys, p, q, 1.0, cfg, 4);
  const Vec dp = flow_to(sys, p, 1.0, cfg) - flow_to(sys, q, 1.0, cfg);
  // Gauss-Legendre with 4 nodes is exact for the cubic Van der Pol term.
  CHECK((U * (p - q) - dp).norm() < 1e-8);
}

TEST_CASE("positive QR") {
  Rng rng(6);
  const Mat V = random_matrix(4, rng, 1.0).leftCols(3);
  const auto [Q, R] = positive_qr(V);
  CHECK((Q * R - V).norm() < 1e-12);
  CHECK((Q.transpose() * Q - Mat::Identity(3, 3)).norm() < 1e-12);
  CHECK((R.diagonal().array() >= 0).all());
  CHECK(R.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm() == 0.0);
}

TEST_CASE("trajectory CSV round-trips doubles") {
  CHECK(std::stod(format_double(0.1)) == 0.1);
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  const SystemDef sys = linear_diag(Vec::Constant(2, -1.0));
  IntegratorConfig cfg = rk4_config(0.1);
  cfg.sample_interval = 0.5;
  std::ostringstream os;
  write_trajectory_csv(os, integrate(sys, Vec::Ones(2), 1.0, cfg));
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "t,x1,x2");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("RK4 error ratio on exponential decay") {
  const SystemDef sys = linear_diag(Vec::Constant(1, -1.0));
  const double exact = std::exp(-1.0);
  const double e1 = std::abs(flow_to(sys, Vec::Ones(1), 1.0, rk4_config(0.1))(0) - exact);
  const double e2 = std::abs(flow_to(sys, Vec::Ones(1), 1.0, rk4_config(0.05))(0) - exact);
  CHECK(e1 / e2 >= 14.0);
  CHECK(e1 / e2 <= 18.0);
}

TEST_CASE("adaptive integrator honours rel_tol") {
  Rng rng(10);
  const Mat A = random_matrix(3, rng, 0.7);
  const SystemDef sys = linear_system(A);
  const Vec x0 = random_gaussian(3, rng);
  const Vec exact = oracle::expm(3.0 * A) * x0;
  IntegratorConfig loose;
  loose.rel_tol = 1e-6;
  loose.abs_tol = 1e-12;
  IntegratorConfig tight = loose;
  tight.rel_tol = 0.5e-6;
  const double el = (flow_to(sys, x0, 3.0, loose) - exact).norm();
  const double et = (flow_to(sys, x0, 3.0, tight) - exact).norm();
  CHECK(et < el);
}

TEST_CASE("semigroup property on every builtin") {
  Rng rng(15);
  IntegratorConfig cfg;
  cfg.rel_tol = 1e-10;
  cfg.abs_tol = 1e-12;
  for (const SystemDef& sys : builtin_systems()) {
    CAPTURE(sys.name);
    const Vec c = sys.domain_box.center();
    const Vec x = c + 0.2 * (random_in_box(sys.domain_box, rng) - c);
    const Vec direct = flow_to(sys, x, 1.5, cfg);
    const Vec split = flow_to(sys, flow_to(sys, x, 0.5, cfg), 1.0, cfg);
    CHECK((direct - split).norm() <= 100.0 * cfg.rel_tol * (1.0 + direct.norm()));
  }
}
