#include <doctest.h>

#include <cmath>
#include <sstream>
#include <nlohmann/json.hpp>

#include "kcone/survey.hpp"
#include "kcone/random.hpp"
#include "kcone/systems.hpp"

using namespace kcone;
using nlohmann::json;

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

Vec vec(std::initializer_list<double> d) {
  Vec v(static_cast<Eigen::Index>(d.size()));
  Eigen::Index i = 0;
  for (double x : d) v(i++) = x;
  return v;
}

SurveyConfig hirsch_cfg(int n_points) {
  SurveyConfig cfg;
  cfg.region = cube(3, -2.0, 2.0);
  cfg.n_points = n_points;
  cfg.classify.T_transient = 30.0;
  cfg.classify.T_observe = 5.0;
  cfg.classify.lyapunov_T = 0.0;
  cfg.seed = 5;
  return cfg;
}

std::string csv_of(const SurveyReport& r, int n) {
  std::ostringstream os;
  write_survey_csv(os, r, n);
  return os.str();
}

}  // namespace

TEST_CASE("survey points are reproducible and inside the region") {
  SurveyConfig cfg = hirsch_cfg(40);
  const auto a = survey_points(cfg);
  const auto b = survey_points(cfg);
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
    CHECK(cfg.region.contains(a[i]));
  }
  // Point i does not depend on how many points follow it.
  cfg.n_points = 10;
  const auto c = survey_points(cfg);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == a[i]);
  cfg.seed = 6;
  CHECK(survey_points(cfg)[0] != a[0]);
}

TEST_CASE("hirsch survey converges everywhere") {
  const SystemDef sys = cooperative_hirsch(3);
  const SurveyReport r = run_survey(sys, *sys.cone, hirsch_cfg(20));
  CHECK(r.records.size() == 20);
  CHECK(r.classified == 20);
  CHECK(r.escaped == 0);
  CHECK(r.failed == 0);
  double total = 0.0;
  for (const auto& [name, frac] : r.fractions) {
    total += frac;
    if (name == "ConvergesToEquilibrium") CHECK(frac == 1.0);
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(r.fraction_generic == 1.0);

  const json s = survey_summary(r, hirsch_cfg(20));
  CHECK(s["classified"] == 20);
  CHECK(s["fractions"]["ConvergesToEquilibrium"] == 1.0);
  CHECK(s["density_ok"] == true);

  std::ostringstream frac;
  write_fraction_table(frac, r);
  CHECK(frac.str().rfind("# class fraction\n", 0) == 0);
}

TEST_CASE("survey output does not depend on the thread count") {
  const SystemDef sys = cooperative_hirsch(3);
  SurveyConfig cfg = hirsch_cfg(16);
  cfg.jobs = 1;
  const std::string one = csv_of(run_survey(sys, *sys.cone, cfg), 3);
  cfg.jobs = 4;
  const std::string four = csv_of(run_survey(sys, *sys.cone, cfg), 3);
  CHECK(one == four);
  std::istringstream is(one);
  std::string header;
  std::getline(is, header);
  CHECK(header ==
        "id,x0_1,x0_2,x0_3,class,period,closure_error,t1,t2,order_margin,lambda_k,escaped");
}

TEST_CASE("escapes are counted and probed") {
  const SystemDef sys = find_system("linear_diag");
  SurveyConfig cfg;
  cfg.region = cube(3, -1.0, 1.0);
  cfg.n_points = 5;
  cfg.classify.T_transient = 50.0;
  SurveyReport r = run_survey(sys, *sys.cone, cfg);
  CHECK(r.escaped == 5);
  CHECK(r.classified == 0);
  CHECK(survey_summary(r, cfg)["fractions"].is_null());
  CHECK(survey_summary(r, cfg)["invariance_violated"] == true);
  density_probe(sys, *sys.cone, r, 0.1, 2, cfg);
  CHECK(r.density_probes.size() == 5);
  CHECK_FALSE(density_ok(r));
  CHECK(csv_of(r, 3).find("EscapedDomain") != std::string::npos);
}

TEST_CASE("survey input errors") {
  const SystemDef sys = cooperative_hirsch(3);
  SurveyConfig cfg = hirsch_cfg(4);
  cfg.region = cube(3, -5.0, 5.0);
  CHECK(code_of([&] { run_survey(sys, *sys.cone, cfg); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { survey_config_from_json({{"n_point", 3}}, sys); }) ==
        ErrorCode::ConfigError);
  CHECK(code_of([&] { survey_config_from_json({{"region", {{"lo", {0, 0}}, {"hi", {1, 1}}}}}, sys); }) ==
        ErrorCode::ConfigError);
  const SurveyConfig parsed = survey_config_from_json(
      {{"n_points", 7}, {"sampler", "halton"}, {"classify", {{"T_transient", 3.0}}}}, sys);
  CHECK(parsed.n_points == 7);
  CHECK(parsed.sampler == Sampler::Halton);
  CHECK(parsed.classify.T_transient == 3.0);
  CHECK(parsed.region.lo == sys.domain_box.lo);
}

TEST_CASE("Hausdorff distance") {
  const std::vector<Vec> a = {vec({0, 0}), vec({1, 0})};
  const std::vector<Vec> b = {vec({0, 0}), vec({1, 0}), vec({1, 3})};
  CHECK(hausdorff_distance(a, a) == 0.0);
  CHECK(hausdorff_distance(a, b) == doctest::Approx(3.0));
  CHECK(hausdorff_distance(b, a) == doctest::Approx(3.0));
  CHECK(code_of([&] { hausdorff_distance(a, {}); }) == ErrorCode::EmptySample);
}

TEST_CASE("closed-orbit analysis on a small Smith survey") {
  const SystemDef sys = smith_oscillator(4);
  SurveyConfig cfg;
  cfg.region = make_box(vec({-2.5, -2.5, -0.5, -0.5}), vec({2.5, 2.5, 0.5, 0.5}));
  cfg.n_points = 8;
  cfg.classify.T_transient = 50.0;
  cfg.classify.T_observe = 20.0;
  cfg.classify.lyapunov_T = 0.0;
  cfg.jobs = 0;
  const SurveyReport r = run_survey(sys, *sys.cone, cfg);
  const PbReport pb = pb_analysis(sys, *sys.cone, r, cfg.classify);
  REQUIRE(pb.fraction_periodic);
  CHECK(*pb.fraction_periodic == 1.0);
  CHECK(pb.denominator == 8);
  CHECK(pb.clusters.size() == 1);
  CHECK(pb.clusters[0].mean_period == doctest::Approx(6.6633).epsilon(1e-3));
  CHECK(to_json(pb)["clusters"].size() == 1);

  const SystemDef hirsch = cooperative_hirsch(3);
  CHECK(code_of([&] { pb_analysis(hirsch, *hirsch.cone, r, cfg.classify); }) ==
        ErrorCode::RankMismatch);
  CHECK(to_json(PbReport{})["fraction_periodic_among_nonequilibrium"] == "no-data");
}

TEST_CASE("two nested cycles form two clusters") {
  const SystemDef sys = smith_two_cycle(4);
  SurveyConfig cfg;
  cfg.region = make_box(vec({-3.5, -3.5, -0.5, -0.5}), vec({3.5, 3.5, 0.5, 0.5}));
  cfg.n_points = 20;
  cfg.classify.T_transient = 60.0;
  cfg.classify.T_observe = 20.0;
  cfg.classify.lyapunov_T = 0.0;
  cfg.jobs = 0;
  const SurveyReport r = run_survey(sys, *sys.cone, cfg);
  const PbReport pb = pb_analysis(sys, *sys.cone, r, cfg.classify);
  REQUIRE(pb.clusters.size() == 2);
  std::vector<int> seen(r.records.size(), 0);
  for (const auto& c : pb.clusters)
    for (int id : c.members) ++seen[static_cast<std::size_t>(id)];
  for (const auto& rec : r.records)
    CHECK(seen[static_cast<std::size_t>(rec.id)] == (rec.result.kind == OrbitKind::Periodic ? 1 : 0));
  // Angular speed grows with the radius, so the two periods differ.
  CHECK(std::abs(pb.clusters[0].mean_period - pb.clusters[1].mean_period) > 0.5);
}

TEST_CASE("period is stable under step halving") {
  const SystemDef sys = smith_oscillator(4);
  ClassifyConfig cfg;
  cfg.T_transient = 50.0;
  cfg.T_observe = 20.0;
  const Vec on_cycle = flow_to(sys, vec({1, 0, 0, 0}), 60.0, cfg.integrator);
  CHECK(period_step_halving(sys, on_cycle, cfg) < 1e-6);
}

TEST_CASE("ordered pairs with a common limit point") {
  // Hirsch: ordered pairs converge to the same equilibrium, which classifies as one.
  const SystemDef hirsch = cooperative_hirsch(3);
  ClassifyConfig cfg;
  cfg.T_transient = 40.0;
  cfg.T_observe = 5.0;
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x1 = random_in_box(cube(3, -1.5, 1.5), rng);
    const Vec x2 = x1 + 0.05 * (Vec::Ones(3) + random_in_box(cube(3, 0.0, 1.0), rng));
    REQUIRE(ordered(*hirsch.cone, x2, x1) == Order::StronglyOrdered);
    const OrbitClass a = classify_orbit(hirsch, *hirsch.cone, x1, cfg);
    const OrbitClass b = classify_orbit(hirsch, *hirsch.cone, x2, cfg);
    if (!a.equilibrium || !b.equilibrium) continue;
    if ((a.equilibrium->point - b.equilibrium->point).norm() > 1e-6) continue;
    const OrbitClass z = classify_orbit(hirsch, *hirsch.cone, a.equilibrium->point, cfg);
    CHECK(z.kind == OrbitKind::ConvergesToEquilibrium);
  }

  // Smith: ordered pairs share the limit cycle; points on it are periodic and
  // carry an order witness.
  const SystemDef smith = smith_oscillator(4);
  cfg.T_transient = 50.0;
  cfg.T_observe = 20.0;
  for (int trial = 0; trial < 4; ++trial) {
    const Vec x1 = random_in_box(cube(4, -0.4, 0.4), rng);
    Vec d = Vec::Zero(4);
    d(0) = 0.05;
    const Vec x2 = x1 + d;
    REQUIRE(ordered(*smith.cone, x2, x1) == Order::StronglyOrdered);
    const auto na = omega_sample(smith, x1, cfg);
    const auto nb = omega_sample(smith, x2, cfg);
    // Two samplings of one cycle differ by at most one sampling step.
    double speed = 0.0;
    for (const Vec& y : na) speed = std::max(speed, smith.F(y).norm());
    CHECK(hausdorff_distance(na, nb) < speed * cfg.stride);
    const OrbitClass z = classify_orbit(smith, *smith.cone, na.front(), cfg);
    const bool consistent = z.kind == OrbitKind::ConvergesToEquilibrium ||
                            z.kind == OrbitKind::PseudoOrdered ||
                            (z.kind == OrbitKind::Periodic && z.witness.has_value());
    CHECK(consistent);
  }
}

TEST_CASE("generic behaviour on shipped monotone fixtures") {
  for (const SystemDef& sys : builtin_systems()) {
    if (!sys.cone) continue;
    CAPTURE(sys.name);
    SurveyConfig cfg;
    const Vec c = sys.domain_box.center();
    cfg.region = make_box(c + 0.5 * (sys.domain_box.lo - c), c + 0.5 * (sys.domain_box.hi - c));
    cfg.n_points = 30;
    cfg.classify.T_transient = 40.0;
    cfg.classify.T_observe = 10.0;
    cfg.classify.lyapunov_T = 0.0;
    cfg.jobs = 0;
    const SurveyReport r = run_survey(sys, *sys.cone, cfg);
    // Partition: each record is in exactly one class or excluded.
    int counted = 0;
    for (const auto& rec : r.records)
      if (!rec.failed && rec.result.kind != OrbitKind::Escaped) ++counted;
    CHECK(counted == r.classified);
    CHECK(r.classified + r.escaped + r.failed == 30);
    if (r.classified > 0) CHECK(r.fraction_generic >= 0.95);
  }
}
