#include "kcone/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <deque>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kcone/classify.hpp"
#include "kcone/cone.hpp"
#include "kcone/cooperativity.hpp"
#include "kcone/flow.hpp"
#include "kcone/json_io.hpp"
#include "kcone/random.hpp"
#include "kcone/separation.hpp"
#include "kcone/survey.hpp"
#include "kcone/systems.hpp"

namespace kcone {
namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

struct Flags {
  std::string config_path;
  std::string system_name;
  std::string systems_dir;
  std::string out;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string x0;
  std::optional<double> T;
  std::optional<int> k;
  int samples = 0;
};

struct Context {
  json config;  // effective config, echoed in the manifest
  SystemDef system;
  std::optional<ConeSpec> cone;
  IntegratorConfig integrator;
  std::uint64_t seed = 1;
  fs::path out;
  int jobs = 1;
};

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_validation(ErrorCode c) {
  switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::UnknownSystemName:
    case ErrorCode::NotSymmetric:
    case ErrorCode::NearSingular:
    case ErrorCode::DegenerateSignature:
    case ErrorCode::RankMismatch:
      return true;
    default:
      return false;
  }
}

int report_error(const std::string& code, const std::string& message, int exit_code) {
  std::cerr << json{{"error", code}, {"message", message}, {"exit", exit_code}}.dump() << '\n';
  return exit_code;
}

Vec parse_vector(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  require(!values.empty(), ErrorCode::ConfigError, std::string(what) + ": empty vector");
  return Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::ConfigError, "cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("config parse error: ") + e.what());
  }
}

SystemDef resolve_system(const json& spec, const std::string& systems_dir) {
  if (spec.is_object()) return system_from_json(spec);
  require(spec.is_string(), ErrorCode::ConfigError, "system: expected name or object");
  const std::string name = spec.get<std::string>();
  if (!systems_dir.empty())
    for (auto& s : load_user_systems(systems_dir))
      if (s.name == name) return s;
  return find_system(name);
}

// Validates everything a command needs before any computation runs.
Context load_context(const Flags& flags, std::initializer_list<const char*> sections) {
  json cfg;
  if (!flags.config_path.empty()) {
    cfg = read_json_file(flags.config_path);
  } else if (!flags.system_name.empty()) {
    cfg = {{"system", flags.system_name}, {"cone", "default"}};
  } else {
    throw Error(ErrorCode::ConfigError, "no configuration: pass --config or --system");
  }
  require_keys(cfg, {"$schema", "system", "cone", "integrator", "classify", "survey",
                     "cooperativity", "separation", "x0", "T", "output_dir", "seed"},
               "config");
  if (cfg.contains("$schema"))
    require(cfg["$schema"] == kConfigSchema, ErrorCode::ConfigError,
            std::string("config: unsupported $schema, expected ") + kConfigSchema);
  require(cfg.contains("system"), ErrorCode::ConfigError, "config: missing 'system'");
  require(cfg.contains("cone"), ErrorCode::ConfigError, "config: missing 'cone'");

  Context ctx;
  ctx.system = resolve_system(cfg["system"], flags.systems_dir);
  if (cfg["cone"].is_string()) {
    require(cfg["cone"] == "default", ErrorCode::ConfigError,
            "cone: expected \"default\" or a cone object");
    ctx.cone = ctx.system.cone;
  } else {
    ctx.cone = cone_from_json(cfg["cone"]);
  }
  if (ctx.cone)
    require(ctx.cone->dim() == ctx.system.n, ErrorCode::ConfigError,
            "cone: dimension differs from the system");
  if (cfg.contains("integrator"))
    ctx.integrator = integrator_config_from_json(cfg["integrator"]);
  if (cfg.contains("seed")) {
    require(cfg["seed"].is_number_unsigned(), ErrorCode::ConfigError,
            "seed: expected non-negative integer");
    ctx.seed = cfg["seed"].get<std::uint64_t>();
  }
  if (flags.seed) ctx.seed = *flags.seed;
  cfg["seed"] = ctx.seed;

  std::string out = "kcone_out";
  if (cfg.contains("output_dir")) {
    require(cfg["output_dir"].is_string(), ErrorCode::ConfigError,
            "output_dir: expected string");
    out = cfg["output_dir"].get<std::string>();
  }
  if (!flags.out.empty()) out = flags.out;
  cfg["output_dir"] = out;
  ctx.out = out;
  require(flags.jobs >= 0, ErrorCode::ConfigError, "--jobs must be non-negative");
  ctx.jobs = flags.jobs;

  for (const char* s : sections)
    if (!cfg.contains(s)) cfg[s] = json::object();
  ctx.config = std::move(cfg);
  return ctx;
}

Vec initial_state(const Flags& flags, const Context& ctx) {
  Vec x0;
  if (!flags.x0.empty())
    x0 = parse_vector(flags.x0, "--x0");
  else if (ctx.config.contains("x0"))
    x0 = vec_from_json(ctx.config["x0"], "x0");
  else
    x0 = ctx.system.domain_box.center();
  require(x0.size() == ctx.system.n, ErrorCode::ConfigError,
          "x0: expected " + std::to_string(ctx.system.n) + " components");
  return x0;
}

double horizon(const Flags& flags, const Context& ctx, double fallback) {
  double T = fallback;
  if (ctx.config.contains("T")) {
    require(ctx.config["T"].is_number(), ErrorCode::ConfigError, "T: expected number");
    T = ctx.config["T"].get<double>();
  }
  if (flags.T) T = *flags.T;
  return T;
}

const ConeSpec& need_cone(const Context& ctx) {
  require(ctx.cone.has_value(), ErrorCode::ConfigError,
          "cone: system '" + ctx.system.name + "' has no default cone");
  return *ctx.cone;
}

// Collects outputs in memory so nothing is written unless the command succeeds.
class Outputs {
 public:
  std::ostream& file(const std::string& name) {
    names_.push_back(name);
    return streams_.emplace_back();
  }

  void commit(const Context& ctx, const std::string& command) {
    fs::create_directories(ctx.out);
    for (std::size_t i = 0; i < names_.size(); ++i) {
      std::ofstream f(ctx.out / names_[i], std::ios::binary);
      f << streams_[i].str();
    }
    json manifest = {{"command", command},
                     {"version", kVersion},
                     {"seed", ctx.seed},
                     {"jobs", ctx.jobs},
                     {"config", ctx.config},
                     {"config_hash", config_hash(ctx.config)},
                     {"files", names_}};
    std::ofstream(ctx.out / "manifest.json") << manifest.dump(2) << '\n';
  }

 private:
  std::vector<std::string> names_;
  std::deque<std::ostringstream> streams_;
};

int cmd_systems_list(const Flags& flags) {
  std::vector<SystemDef> systems = builtin_systems();
  if (!flags.systems_dir.empty())
    for (auto& s : load_user_systems(flags.systems_dir)) systems.push_back(std::move(s));
  std::cout << "name                     n  cone        rank  lmi sweep\n";
  for (const auto& s : systems) {
    std::string cone = "-";
    std::string rank = "-";
    std::string cert = "no cone";
    if (s.cone) {
      cone = s.cone->is_quadratic() ? "quadratic" : "orthant";
      rank = std::to_string(s.cone->rank());
      if (s.cone->is_quadratic()) {
        RegionOptions opts;
        opts.n_samples = 500;
        opts.jobs = flags.jobs;
        const LmiReport rep = check_region(s, *s.cone, s.domain_box, opts);
        cert = rep.fraction_feasible == 1.0
                   ? "certified"
                   : "FAILED (" + format_double(rep.fraction_feasible) + ")";
      } else {
        cert = "n/a (orthant)";
      }
    }
    std::string name = s.name;
    name.resize(std::max<std::size_t>(name.size(), 24), ' ');
    std::string c = cone;
    c.resize(12, ' ');
    std::string r = rank;
    r.resize(6, ' ');
    std::cout << name << ' ' << s.n << (s.n < 10 ? "  " : " ") << c << r << cert << '\n';
  }
  return kExitOk;
}

int cmd_simulate(const Flags& flags) {
  Context ctx = load_context(flags, {"integrator"});
  const Vec x0 = initial_state(flags, ctx);
  const double T = horizon(flags, ctx, 10.0);
  ctx.config["x0"] = vec_to_json(x0);
  ctx.config["T"] = T;
  const Trajectory traj = integrate(ctx.system, x0, T, ctx.integrator);
  Outputs out;
  write_trajectory_csv(out.file("trajectory.csv"), traj);
  out.commit(ctx, "simulate");
  return kExitOk;
}

int cmd_lyapunov(const Flags& flags) {
  Context ctx = load_context(flags, {"integrator"});
  const Vec x0 = initial_state(flags, ctx);
  const double T = horizon(flags, ctx, 200.0);
  int k = flags.k ? *flags.k : (ctx.cone ? ctx.cone->rank() : 1);
  require(k >= 1 && k <= ctx.system.n, ErrorCode::ConfigError, "--k out of range");
  require(T > 0.0, ErrorCode::ConfigError, "T must be positive");
  ctx.config["x0"] = vec_to_json(x0);
  ctx.config["T"] = T;
  const int m = std::min(k + 1, ctx.system.n);
  const LyapunovEstimate est =
      lyapunov_spectrum(ctx.system, x0, m, T, ctx.integrator, derive_seed(ctx.seed, 1));
  json j = {{"exponents", est.exponents},
            {"k", k},
            {"k_lyapunov", est.exponents[k - 1]},
            {"T_total", est.T_total},
            {"T_align", est.T_align},
            {"late_oscillation", est.late_oscillation},
            {"cauchy", est.cauchy},
            {"seed", est.seed}};
  j["domination_margin"] =
      m > k ? json(est.exponents[k - 1] - est.exponents[k]) : json(nullptr);
  Outputs out;
  out.file("exponents.json") << j.dump(2) << '\n';
  auto& hist = out.file("history.csv");
  hist << 't';
  for (int i = 1; i <= m; ++i) hist << ",lambda" << i;
  hist << '\n';
  for (std::size_t i = 0; i < est.history.size(); ++i) {
    hist << format_double(est.T_align +
                          (est.T_total - est.T_align) * (i + 1) / est.history.size());
    for (int c = 0; c < m; ++c) hist << ',' << format_double(est.history[i](c));
    hist << '\n';
  }
  out.commit(ctx, "lyapunov");
  return kExitOk;
}

int cmd_separation(const Flags& flags) {
  Context ctx = load_context(flags, {"integrator", "separation"});
  const Vec x0 = initial_state(flags, ctx);
  const json& sec = ctx.config["separation"];
  require_keys(sec, {"warmup", "forward", "points", "spacing", "gap_tol", "constants_samples"},
               "separation");
  const double warmup = sec.value("warmup", 50.0);
  const double forward = sec.value("forward", 50.0);
  const int points = sec.value("points", 1);
  const double spacing = sec.value("spacing", ctx.integrator.qr_interval);
  const int samples = sec.value("constants_samples", 200);
  int k = flags.k ? *flags.k : (ctx.cone ? ctx.cone->rank() : 0);
  require(k >= 1 && k < ctx.system.n, ErrorCode::ConfigError, "k must satisfy 1 <= k < n");
  require(points >= 1 && samples >= 1, ErrorCode::ConfigError,
          "separation: points and constants_samples must be positive");
  SeparationOptions opts;
  opts.gap_tol = sec.value("gap_tol", opts.gap_tol);
  opts.seed = ctx.seed;
  ctx.config["x0"] = vec_to_json(x0);

  const auto splits = estimate_splittings_along(ctx.system, x0, k, warmup, spacing, points,
                                                forward, ctx.integrator, opts);
  std::optional<SeparationConstants> constants;
  const bool all_ok = std::all_of(splits.begin(), splits.end(),
                                  [](const SplittingEstimate& s) { return s.cone_ok; });
  if (ctx.cone && all_ok)
    constants = estimate_constants(splits, *ctx.cone, samples, derive_seed(ctx.seed, 3));
  json j = splitting_report(splits.front(), constants ? &*constants : nullptr);
  json all = json::array();
  for (const auto& s : splits) all.push_back(splitting_report(s, nullptr));
  j["splittings"] = all;
  Outputs out;
  out.file("splitting.json") << j.dump(2) << '\n';
  out.commit(ctx, "separation");
  return kExitOk;
}

int cmd_classify(const Flags& flags) {
  Context ctx = load_context(flags, {"classify"});
  const Vec x0 = initial_state(flags, ctx);
  ClassifyConfig ccfg = classify_config_from_json(ctx.config["classify"]);
  ccfg.seed = ctx.seed;
  ctx.config["x0"] = vec_to_json(x0);
  const OrbitClass c = classify_orbit(ctx.system, need_cone(ctx), x0, ccfg);
  json j = to_json(c);
  j["config_hash"] = config_hash(ctx.config);
  Outputs out;
  out.file("classification.json") << j.dump(2) << '\n';
  std::cout << to_string(c.kind) << '\n';
  out.commit(ctx, "classify");
  return kExitOk;
}

int cmd_check_coop(const Flags& flags) {
  Context ctx = load_context(flags, {"cooperativity"});
  const ConeSpec& cone = need_cone(ctx);
  require(cone.is_quadratic(), ErrorCode::ConfigError, "check-coop: quadratic cone required");
  const json& sec = ctx.config["cooperativity"];
  require_keys(sec, {"n_samples", "sampler", "bracket", "lambda", "eps"}, "cooperativity");
  RegionOptions opts;
  opts.n_samples = flags.samples > 0 ? flags.samples : sec.value("n_samples", 1000);
  opts.sampler = sampler_from_string(sec.value("sampler", std::string("halton")));
  opts.seed = ctx.seed;
  opts.jobs = ctx.jobs;
  if (sec.contains("bracket")) {
    const Vec b = vec_from_json(sec["bracket"], "cooperativity.bracket");
    require(b.size() == 2 && b(0) < b(1), ErrorCode::ConfigError,
            "cooperativity.bracket: expected [lo, hi]");
    opts.bracket = std::make_pair(b(0), b(1));
  }
  require(sec.contains("lambda") == sec.contains("eps"), ErrorCode::ConfigError,
          "cooperativity: lambda and eps go together");
  require(opts.n_samples >= 1, ErrorCode::ConfigError, "cooperativity.n_samples must be positive");

  const LmiReport rep = check_region(ctx.system, cone, ctx.system.domain_box, opts);
  json j = to_json(rep);
  if (sec.contains("lambda")) {
    const UniformReport u = check_smith_uniform(ctx.system, cone, ctx.system.domain_box,
                                                sec["lambda"].get<double>(),
                                                sec["eps"].get<double>(), opts);
    j["uniform"] = {{"ok", u.ok},
                    {"worst_value", u.worst_value},
                    {"worst_point", vec_to_json(u.worst_point)},
                    {"samples", u.samples}};
  }
  Outputs out;
  out.file("lmi_report.json") << j.dump(2) << '\n';
  write_lmi_csv(out.file("lmi_samples.csv"), rep);
  std::cout << "fraction_feasible " << format_double(rep.fraction_feasible) << '\n';
  out.commit(ctx, "check-coop");
  return kExitOk;
}

int cmd_survey(const Flags& flags) {
  Context ctx = load_context(flags, {"survey"});
  const ConeSpec& cone = need_cone(ctx);
  const json& sec = ctx.config["survey"];
  SurveyConfig scfg = survey_config_from_json(sec, ctx.system);
  scfg.seed = ctx.seed;
  if (!sec.contains("parallel_width") || flags.jobs != 1) scfg.jobs = ctx.jobs;
  const double radius = sec.value("density_radius", 0.0);
  const int probes = sec.value("probes_per_point", 0);
  require(radius >= 0.0 && probes >= 0, ErrorCode::ConfigError,
          "survey: density_radius and probes_per_point must be non-negative");

  SurveyReport report = run_survey(ctx.system, cone, scfg);
  if (probes > 0) density_probe(ctx.system, cone, report, radius, probes, scfg);
  Outputs out;
  write_survey_csv(out.file("survey.csv"), report, ctx.system.n);
  json summary = survey_summary(report, scfg);
  if (cone.rank() == 2) summary["poincare_bendixson"] =
      to_json(pb_analysis(ctx.system, cone, report, scfg.classify));
  out.file("summary.json") << summary.dump(2) << '\n';
  write_fraction_table(out.file("fractions.dat"), report);
  out.commit(ctx, "survey");
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"kcone: flows monotone with respect to rank-k cones"};
  app.set_version_flag("--version", kVersion);
  Flags flags;
  std::uint64_t seed = 0;
  app.add_option("--config", flags.config_path, "RunConfig JSON file");
  app.add_option("--system", flags.system_name, "system name; shorthand for a minimal config");
  app.add_option("--systems-dir", flags.systems_dir, "directory of user system JSON files");
  app.add_option("--out", flags.out, "output directory (overrides output_dir)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config)");
  app.add_option("--jobs", flags.jobs, "worker threads for surveys and LMI sweeps (0: all)");
  app.require_subcommand(1);

  auto* systems = app.add_subcommand("systems", "builtin and user systems");
  auto* list = systems->add_subcommand("list", "list systems with their certification status");
  systems->require_subcommand(1);

  auto* simulate = app.add_subcommand("simulate", "integrate and write a trajectory CSV");
  auto* lyapunov = app.add_subcommand("lyapunov", "leading Lyapunov exponents");
  auto* separation = app.add_subcommand("separation", "E/F splitting with cone checks");
  auto* classify = app.add_subcommand("classify", "classify the orbit of x0");
  auto* coop = app.add_subcommand("check-coop", "pointwise LMI sweep over the domain box");
  auto* survey = app.add_subcommand("survey", "generic-behaviour survey");
  std::optional<double> T;
  std::optional<int> k;
  for (auto* sub : {simulate, lyapunov, separation, classify}) sub->add_option("--x0", flags.x0, "initial state, comma separated");
  for (auto* sub : {simulate, lyapunov}) sub->add_option("--T", T, "time horizon");
  for (auto* sub : {lyapunov, separation}) sub->add_option("--k", k, "rank of the splitting");
  coop->add_option("--samples", flags.samples, "number of sample points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what(), kExitValidation);
  }
  if (seed_opt->count() > 0) flags.seed = seed;
  flags.T = T;
  flags.k = k;

  try {
    if (*list) return cmd_systems_list(flags);
    if (*simulate) return cmd_simulate(flags);
    if (*lyapunov) return cmd_lyapunov(flags);
    if (*separation) return cmd_separation(flags);
    if (*classify) return cmd_classify(flags);
    if (*coop) return cmd_check_coop(flags);
    if (*survey) return cmd_survey(flags);
  } catch (const Error& e) {
    const int code = is_validation(e.code()) ? kExitValidation : kExitNumeric;
    return report_error(std::string(to_string(e.code())), e.what(), code);
  } catch (const json::exception& e) {
    return report_error("ConfigError", e.what(), kExitValidation);
  } catch (const fs::filesystem_error& e) {
    return report_error("IOError", e.what(), kExitNumeric);
  }
  return kExitValidation;
}

}  // namespace kcone
