#include "kcone/survey.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "kcone/json_io.hpp"
#include "kcone/parallel.hpp"
#include "kcone/random.hpp"

namespace kcone {
namespace {

constexpr OrbitKind kClassOrder[] = {OrbitKind::ConvergesToEquilibrium, OrbitKind::Periodic,
                                     OrbitKind::PseudoOrdered, OrbitKind::Unordered};

ClassifyConfig point_config(const SurveyConfig& cfg, std::uint64_t stream) {
  ClassifyConfig c = cfg.classify;
  c.seed = derive_seed(cfg.seed, stream);
  return c;
}

SurveyRecord classify_record(const SystemDef& system, const ConeSpec& cone, int id,
                             const Vec& x0, const ClassifyConfig& ccfg) {
  SurveyRecord rec;
  rec.id = id;
  rec.x0 = x0;
  try {
    rec.result = classify_orbit(system, cone, x0, ccfg);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::WitnessFailedVerification) throw;
    rec.failed = true;
    rec.error = std::string(to_string(e.code())) + ": " + e.what();
    rec.result.x0 = x0;
    rec.result.seed = ccfg.seed;
    rec.result.lambda_k = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

bool is_hit(const OrbitClass& c) {
  return c.kind == OrbitKind::PseudoOrdered || c.kind == OrbitKind::ConvergesToEquilibrium ||
         (c.kind == OrbitKind::Periodic && c.witness);
}

double net_diameter(const std::vector<Vec>& net) {
  if (net.empty()) return 0.0;
  Vec lo = net.front();
  Vec hi = net.front();
  for (const Vec& x : net) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  return (hi - lo).norm();
}

std::string field(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

}  // namespace

std::vector<Vec> survey_points(const SurveyConfig& cfg) {
  require(cfg.n_points >= 1, ErrorCode::InvalidArgument, "survey: n_points must be positive");
  if (cfg.sampler != Sampler::Uniform) {
    auto pts = sample_box(cfg.region, cfg.n_points, cfg.sampler, cfg.seed);
    require(cfg.sampler != Sampler::Grid || static_cast<int>(pts.size()) == cfg.n_points,
            ErrorCode::InvalidArgument, "survey: grid sampler needs n_points = m^n");
    return pts;
  }
  std::vector<Vec> pts;
  for (int id = 0; id < cfg.n_points; ++id) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(id)));
    pts.push_back(random_in_box(cfg.region, rng));
  }
  return pts;
}

SurveyReport run_survey(const SystemDef& system, const ConeSpec& cone,
                        const SurveyConfig& cfg) {
  cfg.classify.validate();
  require(cfg.region.dim() == system.n && cone.dim() == system.n,
          ErrorCode::DimensionMismatch, "survey: dimension mismatch");
  for (Eigen::Index i = 0; i < system.n; ++i)
    require(cfg.region.lo(i) >= system.domain_box.lo(i) &&
                cfg.region.hi(i) <= system.domain_box.hi(i),
            ErrorCode::InvalidArgument, "survey: region must lie inside the domain box");

  const auto points = survey_points(cfg);
  SurveyReport report;
  report.records.resize(points.size());
  parallel_for(points.size(), cfg.jobs, [&](std::size_t i) {
    const int id = static_cast<int>(i);
    report.records[i] =
        classify_record(system, cone, id, points[i], point_config(cfg, 1'000'000 + i));
  });

  std::vector<int> counts(std::size(kClassOrder), 0);
  int generic = 0;
  for (const auto& rec : report.records) {
    if (rec.failed) {
      ++report.failed;
      continue;
    }
    if (rec.result.kind == OrbitKind::Escaped) {
      ++report.escaped;
      continue;
    }
    ++report.classified;
    for (std::size_t c = 0; c < std::size(kClassOrder); ++c)
      if (rec.result.kind == kClassOrder[c]) ++counts[c];
    if (rec.result.kind != OrbitKind::Unordered) ++generic;
    if (rec.result.kind == OrbitKind::Periodic && !rec.result.witness)
      ++report.periodic_without_witness;
  }
  if (report.classified > 0) {
    for (std::size_t c = 0; c < std::size(kClassOrder); ++c)
      report.fractions.emplace_back(to_string(kClassOrder[c]),
                                    static_cast<double>(counts[c]) / report.classified);
    report.fraction_generic = static_cast<double>(generic) / report.classified;
  }
  return report;
}

void density_probe(const SystemDef& system, const ConeSpec& cone, SurveyReport& report,
                   double radius, int probes_per_point, const SurveyConfig& cfg) {
  require(radius >= 0.0 && probes_per_point >= 1, ErrorCode::InvalidArgument,
          "density_probe: need radius >= 0 and at least one probe");
  std::vector<const SurveyRecord*> centers;
  for (const auto& rec : report.records)
    if (!rec.failed && (rec.result.kind == OrbitKind::Unordered ||
                        rec.result.kind == OrbitKind::Escaped))
      centers.push_back(&rec);

  const auto per = static_cast<std::size_t>(probes_per_point);
  std::vector<int> hit(centers.size() * per, 0);
  parallel_for(hit.size(), cfg.jobs, [&](std::size_t slot) {
    const SurveyRecord& rec = *centers[slot / per];
    const std::uint64_t stream =
        2'000'000'000ULL + static_cast<std::uint64_t>(rec.id) * per + slot % per;
    Rng rng(derive_seed(cfg.seed, stream));
    Vec x = rec.x0;
    for (int attempt = 0; attempt < 100 && radius > 0.0; ++attempt) {
      const Vec dir = random_unit(system.n, rng);
      const double r =
          radius * std::pow(std::uniform_real_distribution<double>(0.0, 1.0)(rng),
                            1.0 / system.n);
      const Vec candidate = rec.x0 + r * dir;
      if (system.domain_box.contains(candidate)) {
        x = candidate;
        break;
      }
    }
    const SurveyRecord probe =
        classify_record(system, cone, rec.id, x, point_config(cfg, stream));
    hit[slot] = !probe.failed && is_hit(probe.result) ? 1 : 0;
  });

  for (std::size_t c = 0; c < centers.size(); ++c) {
    DensityProbe p;
    p.center = centers[c]->x0;
    p.radius = radius;
    p.probes = probes_per_point;
    for (std::size_t s = 0; s < per; ++s) p.hits += hit[c * per + s];
    report.density_probes.push_back(std::move(p));
  }
}

bool density_ok(const SurveyReport& report) {
  return std::all_of(report.density_probes.begin(), report.density_probes.end(),
                     [](const DensityProbe& p) { return p.hits >= 1; });
}

double hausdorff_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  require(!a.empty() && !b.empty(), ErrorCode::EmptySample, "hausdorff_distance: empty set");
  auto directed = [](const std::vector<Vec>& from, const std::vector<Vec>& to) {
    double worst = 0.0;
    for (const Vec& x : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec& y : to) best = std::min(best, (x - y).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

PbReport pb_analysis(const SystemDef& system, const ConeSpec& cone,
                     const SurveyReport& report, const ClassifyConfig& cfg,
                     double cluster_factor, int bins) {
  require(cone.rank() == 2, ErrorCode::RankMismatch, "pb_survey: cone rank must be 2");
  (void)system;
  PbReport pb;
  std::vector<const SurveyRecord*> cycles;
  for (const auto& rec : report.records) {
    if (rec.failed || rec.result.kind == OrbitKind::Escaped) continue;
    if (!(rec.result.min_field_on_net > cfg.tol_eq)) continue;
    ++pb.denominator;
    if (rec.result.kind == OrbitKind::Periodic) {
      ++pb.periodic;
      pb.periods.push_back(rec.result.periodic->period);
      cycles.push_back(&rec);
    }
  }
  if (pb.denominator > 0)
    pb.fraction_periodic = static_cast<double>(pb.periodic) / pb.denominator;

  if (!pb.periods.empty()) {
    const auto [mn, mx] = std::minmax_element(pb.periods.begin(), pb.periods.end());
    const double lo = *mn;
    const double width = std::max(*mx - lo, 1e-12) / bins;
    std::vector<int> counts(bins, 0);
    for (double p : pb.periods)
      ++counts[std::min(bins - 1, static_cast<int>((p - lo) / width))];
    for (int b = 0; b < bins; ++b) pb.histogram.emplace_back(lo + (b + 0.5) * width, counts[b]);

    double mean_diam = 0.0;
    for (const auto* rec : cycles) mean_diam += net_diameter(rec->result.cycle_net);
    mean_diam /= static_cast<double>(cycles.size());
    const double threshold = cluster_factor * mean_diam;
    std::vector<const std::vector<Vec>*> leaders;
    for (const auto* rec : cycles) {
      std::size_t c = 0;
      while (c < leaders.size() &&
             hausdorff_distance(*leaders[c], rec->result.cycle_net) >= threshold)
        ++c;
      if (c == leaders.size()) {
        leaders.push_back(&rec->result.cycle_net);
        pb.clusters.push_back({{}, 0.0, net_diameter(rec->result.cycle_net)});
      }
      pb.clusters[c].members.push_back(rec->id);
      pb.clusters[c].mean_period += rec->result.periodic->period;
    }
    for (auto& cl : pb.clusters) cl.mean_period /= static_cast<double>(cl.members.size());
  }
  return pb;
}

PbReport pb_survey(const SystemDef& system, const ConeSpec& cone, const SurveyConfig& cfg) {
  require(cone.rank() == 2, ErrorCode::RankMismatch, "pb_survey: cone rank must be 2");
  return pb_analysis(system, cone, run_survey(system, cone, cfg), cfg.classify);
}

double period_step_halving(const SystemDef& system, const Vec& on_cycle,
                           const ClassifyConfig& cfg) {
  auto period_with = [&](double h) {
    ClassifyConfig c = cfg;
    c.integrator.h = h;
    IntegratorConfig ic = c.integrator;
    ic.sample_interval = c.stride;
    const auto per = detect_periodic(system, integrate(system, on_cycle, c.T_observe, ic), c);
    if (!per) throw Error(ErrorCode::NotConverged, "period_step_halving: no period detected");
    return per->period;
  };
  const double p1 = period_with(cfg.integrator.h);
  const double p2 = period_with(0.5 * cfg.integrator.h);
  return std::abs(p2 - p1) / p1;
}

void write_survey_csv(std::ostream& os, const SurveyReport& report, int n) {
  os << "id";
  for (int i = 1; i <= n; ++i) os << ",x0_" << i;
  os << ",class,period,closure_error,t1,t2,order_margin,lambda_k,escaped\n";
  for (const auto& rec : report.records) {
    const OrbitClass& c = rec.result;
    os << rec.id;
    for (int i = 0; i < n; ++i) os << ',' << format_double(rec.x0(i));
    os << ',' << (rec.failed ? "Failed" : to_string(c.kind)) << ',';
    if (c.periodic) os << format_double(c.periodic->period);
    os << ',';
    if (c.periodic) os << format_double(c.periodic->closure_error);
    os << ',';
    if (c.witness)
      os << format_double(c.witness->t1) << ',' << format_double(c.witness->t2) << ','
         << format_double(c.witness->margin);
    else
      os << ",,";
    os << ',' << field(c.lambda_k) << ','
       << (!rec.failed && c.kind == OrbitKind::Escaped ? 1 : 0) << '\n';
  }
}

void write_fraction_table(std::ostream& os, const SurveyReport& report) {
  os << "# class fraction\n";
  for (const auto& [name, frac] : report.fractions) os << name << ' ' << format_double(frac) << '\n';
}

nlohmann::json survey_summary(const SurveyReport& report, const SurveyConfig& cfg) {
  nlohmann::json fractions = nlohmann::json::object();
  for (const auto& [name, frac] : report.fractions) fractions[name] = frac;
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : report.density_probes)
    probes.push_back({{"center", vec_to_json(p.center)},
                      {"ball_radius", p.radius},
                      {"hits", p.hits},
                      {"probes", p.probes}});
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& rec : report.records)
    if (rec.failed) failures.push_back({{"id", rec.id}, {"error", rec.error}});
  return {{"records", report.records.size()},
          {"classified", report.classified},
          {"escaped", report.escaped},
          {"invariance_violated", report.escaped > 0},
          {"failed", report.failed},
          {"failures", failures},
          {"fractions", report.classified > 0 ? fractions : nlohmann::json(nullptr)},
          {"fraction_generic", report.classified > 0 ? nlohmann::json(report.fraction_generic)
                                                     : nlohmann::json(nullptr)},
          {"periodic_without_witness", report.periodic_without_witness},
          {"density_probes", probes},
          {"density_ok", density_ok(report)},
          {"config", to_json(cfg)},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const PbReport& pb) {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& c : pb.clusters)
    clusters.push_back({{"members", c.members},
                        {"mean_period", c.mean_period},
                        {"diameter", c.diameter}});
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& [centre, count] : pb.histogram) hist.push_back({centre, count});
  return {{"fraction_periodic_among_nonequilibrium",
           pb.fraction_periodic ? nlohmann::json(*pb.fraction_periodic)
                                : nlohmann::json("no-data")},
          {"denominator", pb.denominator},
          {"periodic", pb.periodic},
          {"periods_histogram", hist},
          {"clusters", clusters}};
}

nlohmann::json to_json(const SurveyConfig& cfg) {
  return {{"region", {{"lo", vec_to_json(cfg.region.lo)}, {"hi", vec_to_json(cfg.region.hi)}}},
          {"n_points", cfg.n_points},
          {"sampler", to_string(cfg.sampler)},
          {"classify", to_json(cfg.classify)}};
}

SurveyConfig survey_config_from_json(const nlohmann::json& j, const SystemDef& system) {
  require_keys(j, {"region", "n_points", "sampler", "classify", "density_radius",
                   "probes_per_point", "parallel_width"},
               "survey");
  SurveyConfig cfg;
  cfg.region = system.domain_box;
  if (j.contains("region")) {
    const auto& r = j["region"];
    require_keys(r, {"lo", "hi"}, "survey.region");
    require(r.contains("lo") && r.contains("hi"), ErrorCode::ConfigError,
            "survey.region: lo and hi required");
    try {
      cfg.region = make_box(vec_from_json(r["lo"], "survey.region.lo"),
                            vec_from_json(r["hi"], "survey.region.hi"));
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
  }
  if (j.contains("n_points")) {
    require(j["n_points"].is_number_integer() && j["n_points"].get<long>() >= 1,
            ErrorCode::ConfigError, "survey.n_points: expected positive integer");
    cfg.n_points = j["n_points"].get<int>();
  }
  if (j.contains("sampler")) {
    require(j["sampler"].is_string(), ErrorCode::ConfigError, "survey.sampler: expected string");
    cfg.sampler = sampler_from_string(j["sampler"].get<std::string>());
  }
  if (j.contains("parallel_width")) {
    require(j["parallel_width"].is_number_integer(), ErrorCode::ConfigError,
            "survey.parallel_width: expected integer");
    cfg.jobs = j["parallel_width"].get<int>();
  }
  if (j.contains("classify")) cfg.classify = classify_config_from_json(j["classify"]);
  require(cfg.region.dim() == system.n, ErrorCode::ConfigError,
          "survey.region: dimension differs from the system");
  return cfg;
}

}  // namespace kcone
