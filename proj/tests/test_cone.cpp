#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "kcone/cone.hpp"
#include "kcone/random.hpp"
#include "oracles.hpp"

using namespace kcone;

namespace {

Mat diag(std::initializer_list<double> d) {
  Vec v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v.asDiagonal();
}

Vec vec(std::initializer_list<double> d) {
  Vec v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("quadratic cone construction") {
  CHECK(make_quadratic_cone(diag({-1, -1, 1})).rank() == 2);
  CHECK(code_of([] { make_quadratic_cone(Mat::Identity(3, 3)); }) ==
        ErrorCode::DegenerateSignature);
  CHECK(code_of([] { make_quadratic_cone(-Mat::Identity(3, 3)); }) ==
        ErrorCode::DegenerateSignature);
  CHECK(code_of([] { make_quadratic_cone(diag({-1, 1, 1e-12})); }) == ErrorCode::NearSingular);
  Mat asym = diag({-1, 1});
  asym(0, 1) = 0.5;
  CHECK(code_of([&] { make_quadratic_cone(asym); }) == ErrorCode::NotSymmetric);
  CHECK(code_of([] { make_quadratic_cone(Mat::Zero(2, 3)); }) == ErrorCode::DimensionMismatch);

  Rng rng(5);
  const Vec spectrum = vec({-2, -1, 0.5, 1, 3});
  const ConeSpec c = make_quadratic_cone(oracle::conjugated(spectrum, rng));
  CHECK(c.rank() == 2);
  for (Eigen::Index i = 0; i < 5; ++i)
    CHECK(c.quadratic().eigenvalues(i) == doctest::Approx(spectrum(i)).epsilon(1e-12));
}

TEST_CASE("membership verdicts") {
  const ConeSpec c = make_quadratic_cone(diag({-1, -1, 1}));
  CHECK(membership(c, vec({1, 0, 0})).kind == Membership::Interior);
  CHECK(membership(c, vec({1, 0, 0})).margin == doctest::Approx(-1.0));
  CHECK(membership(c, vec({1, 0, 1})).kind == Membership::Boundary);
  CHECK(membership(c, vec({0, 0, 1})).kind == Membership::Outside);
  CHECK(membership(c, Vec::Zero(3)).kind == Membership::Boundary);

  const ConeSpec o = make_orthant_cone(3);
  CHECK(membership(o, vec({1, 2, 3})).kind == Membership::Interior);
  CHECK(membership(o, vec({-1, -2, -3})).kind == Membership::Interior);
  CHECK(membership(o, vec({1, 0, 3})).kind == Membership::Boundary);
  CHECK(membership(o, vec({1, -1, 3})).kind == Membership::Outside);
}

TEST_CASE("order relations") {
  const ConeSpec c = make_quadratic_cone(diag({-1, -1, 1}));
  const Vec y = vec({0.3, -0.2, 0.7});
  CHECK(ordered(c, y + vec({1, 0, 0}), y) == Order::StronglyOrdered);
  CHECK(ordered(c, y, y) == Order::Ordered);
  CHECK(ordered(c, y + vec({0, 0, 1}), y) == Order::Unordered);
}

TEST_CASE("membership is symmetric and scale invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec spectrum = vec({-1.5, -0.5, 0.7, 2.0});
    const ConeSpec c = make_quadratic_cone(oracle::conjugated(spectrum, rng));
    const Vec x = random_gaussian(4, rng);
    const auto m = membership(c, x);
    CHECK(membership(c, -x).kind == m.kind);
    for (double a : {-7.0, 0.01, 3.5, 1e6})
      CHECK(membership(c, a * x).margin == doctest::Approx(m.margin).epsilon(1e-10));
  }
}

TEST_CASE("distance to cone") {
  const ConeSpec c = make_quadratic_cone(diag({-1, -1, 1}));
  CHECK(distance_to_cone(c, vec({1, 0.2, 0.5})) == 0.0);

  // Boundary of {x2^2 <= x1^2} is the pair of diagonals; scan them.
  const ConeSpec c2 = make_quadratic_cone(diag({-1, 1}));
  double brute = 1e9;
  for (int i = -200000; i <= 200000; ++i) {
    const double t = i * 1e-5;
    brute = std::min({brute, std::hypot(t, t - 1.0), std::hypot(t, -t - 1.0)});
  }
  CHECK(distance_to_cone(c2, vec({0, 1})) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(distance_to_cone(c2, vec({0, 1})) == doctest::Approx(brute).epsilon(1e-9));

  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec spectrum = vec({-2.0, -0.3, 0.8, 1.7});
    const Mat P = oracle::conjugated(spectrum, rng);
    const ConeSpec q = make_quadratic_cone(P);
    const Vec v = random_gaussian(4, rng);
    CHECK(distance_to_cone(q, v) ==
          doctest::Approx(oracle::cone_distance(P, v, 20000, rng)).epsilon(1e-3));
  }

  // Orthant double cone: distance to K u (-K).
  const ConeSpec o = make_orthant_cone(3);
  CHECK(distance_to_cone(o, vec({1, -0.5, 2})) == doctest::Approx(0.5));
  CHECK(distance_to_cone(o, vec({-1, -0.5, 2})) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
}

TEST_CASE("distance vanishes exactly on the cone") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const ConeSpec c = make_quadratic_cone(oracle::conjugated(vec({-1, 0.4, 2.5}), rng));
    const Vec v = random_gaussian(3, rng);
    const auto m = membership(c, v);
    const double d = distance_to_cone(c, v);
    if (m.kind == Membership::Outside)
      CHECK(d > 0.0);
    else if (m.kind == Membership::Interior)
      CHECK(d == 0.0);
  }
}

TEST_CASE("distance when the vector avoids the most negative eigenspace") {
  // v has no component along e1 (eigenvalue -2); the multiplier sits at the pole.
  const Mat P = diag({-2, -1, 1});
  const ConeSpec c = make_quadratic_cone(P);
  const Vec v = vec({0, 0.1, 1});
  Rng rng(3);
  CHECK(distance_to_cone(c, v) == doctest::Approx(oracle::cone_distance(P, v, 20000, rng)).epsilon(1e-6));
}

TEST_CASE("gap distance") {
  const Mat L = Mat::Identity(3, 3).leftCols(2);
  CHECK(gap_distance(L, L) == doctest::Approx(0.0));
  CHECK(gap_distance(Mat::Identity(2, 2).col(0), Mat::Identity(2, 2).col(1)) ==
        doctest::Approx(std::sqrt(2.0)));
  // Nested subspaces of different dimension: the larger one has a direction
  // orthogonal to the smaller.
  CHECK(gap_distance(Mat::Identity(3, 3).leftCols(1), L) == doctest::Approx(std::sqrt(2.0)));

  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const Mat A = random_frame(4, 2, rng);
    const Mat B = random_frame(4, 2, rng);
    CHECK(gap_distance(A, B) == doctest::Approx(oracle::gap(A, B, 100000, rng)).epsilon(1e-3));
  }

  Mat bad = L;
  bad(0, 0) = 1.1;
  CHECK(code_of([&] { gap_distance(bad, L); }) == ErrorCode::NonOrthonormalFrame);
}

TEST_CASE("gap distance is a metric on equal-dimension subspaces") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Mat A = random_frame(5, 2, rng);
    const Mat B = random_frame(5, 2, rng);
    const Mat C = random_frame(5, 2, rng);
    CHECK(std::abs(gap_distance(A, B) - gap_distance(B, A)) < 1e-9);
    CHECK(gap_distance(A, C) <= gap_distance(A, B) + gap_distance(B, C) + 1e-9);
  }
}

TEST_CASE("cone JSON round trip") {
  const ConeSpec c = make_quadratic_cone(diag({-1, -1, 2}));
  nlohmann::json j;
  to_json(j, c);
  CHECK(j["type"] == "quadratic");
  const ConeSpec back = cone_from_json(j);
  CHECK((back.quadratic().P - c.quadratic().P).norm() == 0.0);

  nlohmann::json o;
  to_json(o, make_orthant_cone(4));
  CHECK(o == nlohmann::json{{"type", "orthant"}, {"n", 4}});
  CHECK(cone_from_json(o).rank() == 1);

  CHECK(code_of([] { cone_from_json({{"type", "orthant"}, {"n", 3}, {"extra", 1}}); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([] { cone_from_json({{"type", "polyhedral"}}); }) == ErrorCode::ConfigError);
}

TEST_CASE("restricted definiteness matches membership sampling") {
  Rng rng(41);
  const Mat P = oracle::conjugated(vec({-1.0, -0.5, 0.8, 2.0}), rng);
  const ConeSpec c = make_quadratic_cone(P);
  for (int trial = 0; trial < 40; ++trial) {
    const Mat L = random_frame(4, 2, rng);
    const Vec eig = Eigen::SelfAdjointEigenSolver<Mat>(L.transpose() * P * L).eigenvalues();
    if (std::abs(eig(1)) < 1e-3 || std::abs(eig(0)) < 1e-3) continue;
    const bool neg_def = eig(1) < 0.0;
    const bool pos_def = eig(0) > 0.0;
    bool all_interior = true;
    bool none_inside = true;
    for (int s = 0; s < 2000; ++s) {
      const auto m = membership(c, L * random_unit(2, rng)).kind;
      all_interior = all_interior && m == Membership::Interior;
      none_inside = none_inside && m == Membership::Outside;
    }
    CHECK(neg_def == all_interior);
    CHECK(pos_def == none_inside);
  }
}
