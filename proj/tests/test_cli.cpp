#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>
#include <nlohmann/json.hpp>

#include "kcone/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "kcone");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = kcone::run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("kcone_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path write_config(const fs::path& dir, const json& cfg) {
  fs::create_directories(dir);
  const fs::path p = dir / "config.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

}  // namespace

TEST_CASE("simulate writes a trajectory and a manifest") {
  const fs::path out = scratch("simulate");
  const Run r = run({"--system", "harmonic", "--out", out.string(), "simulate", "--x0", "1,0",
                     "--T", "1"});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(out / "trajectory.csv");
  CHECK(csv.rfind("t,x1,x2\n", 0) == 0);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["command"] == "simulate");
  CHECK(manifest["version"] == kcone::kVersion);
  CHECK(manifest["files"] == json{"trajectory.csv"});
  CHECK(manifest["config_hash"] == kcone::config_hash(manifest["config"]));
  fs::remove_all(out);
}

TEST_CASE("lyapunov and separation commands") {
  const fs::path out = scratch("lyap");
  Run r = run({"--system", "linear_diag4", "--out", out.string(), "lyapunov", "--x0", "0,0,0,0",
               "--T", "50", "--k", "2"});
  REQUIRE(r.code == 0);
  const json ex = json::parse(slurp(out / "exponents.json"));
  CHECK(ex["exponents"].size() == 3);
  CHECK(ex["k_lyapunov"].get<double>() == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(ex["domination_margin"].get<double>() == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(slurp(out / "history.csv").rfind("t,lambda1,lambda2,lambda3\n", 0) == 0);

  r = run({"--system", "linear_diag4", "--out", out.string(), "separation", "--x0", "0,0,0,0"});
  REQUIRE(r.code == 0);
  const json sp = json::parse(slurp(out / "splitting.json"));
  CHECK(sp["cone_ok"] == true);
  CHECK(sp["constants"]["projection_bound_ok"] == true);
  fs::remove_all(out);
}

TEST_CASE("classify and check-coop") {
  const fs::path out = scratch("classify");
  Run r = run({"--system", "cooperative_hirsch", "--out", out.string(), "classify", "--x0",
               "0.5,0.2,0.1"});
  REQUIRE(r.code == 0);
  CHECK(r.out == "ConvergesToEquilibrium\n");
  const json c = json::parse(slurp(out / "classification.json"));
  CHECK(c["class"] == "ConvergesToEquilibrium");
  CHECK(c.contains("config_hash"));

  r = run({"--system", "smith_oscillator", "--out", out.string(), "check-coop", "--samples",
           "64"});
  REQUIRE(r.code == 0);
  const json rep = json::parse(slurp(out / "lmi_report.json"));
  CHECK(rep["aggregate"]["fraction_feasible"] == 1.0);
  CHECK(rep["samples"].size() == 64);
  fs::remove_all(out);
}

TEST_CASE("survey CSVs are identical across thread counts") {
  const fs::path dir = scratch("survey");
  const json cfg = {{"$schema", kcone::kConfigSchema},
                    {"system", "smith_oscillator"},
                    {"cone", "default"},
                    {"survey",
                     {{"n_points", 12},
                      {"region", {{"lo", {-2, -2, -0.5, -0.5}}, {"hi", {2, 2, 0.5, 0.5}}}},
                      {"classify", {{"T_transient", 30.0}, {"T_observe", 15.0}, {"lyapunov_T", 5.0}}}}},
                    {"seed", 11}};
  const fs::path path = write_config(dir, cfg);
  const Run a = run({"--config", path.string(), "--out", (dir / "a").string(), "--jobs", "1",
                     "survey"});
  const Run b = run({"--config", path.string(), "--out", (dir / "b").string(), "--jobs", "4",
                     "survey"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a" / "survey.csv") == slurp(dir / "b" / "survey.csv"));
  CHECK(slurp(dir / "a" / "fractions.dat") == slurp(dir / "b" / "fractions.dat"));
  const json summary = json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary.contains("poincare_bendixson"));
  CHECK(summary["seed"] == 11);

  const Run c = run({"--config", path.string(), "--out", (dir / "c").string(), "--seed", "12",
                     "survey"});
  REQUIRE(c.code == 0);
  CHECK(slurp(dir / "a" / "survey.csv") != slurp(dir / "c" / "survey.csv"));
  fs::remove_all(dir);
}

TEST_CASE("validation failures exit with 2 and write nothing") {
  const fs::path dir = scratch("invalid");
  auto expect = [&](const json& cfg, const std::string& error) {
    const fs::path path = write_config(dir, cfg);
    const Run r = run({"--config", path.string(), "--out", (dir / "out").string(), "simulate"});
    CHECK(r.code == 2);
    const json e = json::parse(r.err);
    CHECK(e["error"] == error);
    CHECK(e["exit"] == 2);
    CHECK_FALSE(fs::exists(dir / "out"));
  };
  expect({{"system", "harmonic"}}, "ConfigError");
  expect({{"system", "harmonic"}, {"cone", "default"}, {"bogus", 1}}, "ConfigError");
  expect({{"system", "lorenz"}, {"cone", "default"}}, "UnknownSystemName");
  expect({{"$schema", "kcone-run-config/0"}, {"system", "harmonic"}, {"cone", "default"}},
         "ConfigError");
  expect({{"system", "harmonic"},
          {"cone", {{"type", "quadratic"}, {"P", {{1, 0}, {0, 1}}}}}},
         "DegenerateSignature");
  expect({{"system", "harmonic"}, {"cone", "default"}, {"x0", {1, 2, 3}}}, "ConfigError");

  const Run usage = run({"--system", "harmonic", "frobnicate"});
  CHECK(usage.code == 2);
  CHECK(json::parse(usage.err)["error"] == "UsageError");
  fs::remove_all(dir);
}

TEST_CASE("numerical failures exit with 3") {
  const fs::path dir = scratch("numeric");
  const json cfg = {{"system", "linear_diag4"},
                    {"cone", "default"},
                    {"separation", {{"warmup", 0.0}, {"forward", 5.0}}}};
  const fs::path path = write_config(dir, cfg);
  const Run r = run({"--config", path.string(), "--out", (dir / "out").string(), "separation",
                     "--x0", "0,0,0,0"});
  CHECK(r.code == 3);
  CHECK(json::parse(r.err)["error"] == "NotConverged");
  CHECK_FALSE(fs::exists(dir / "out"));
  fs::remove_all(dir);
}

TEST_CASE("user systems directory") {
  const fs::path dir = scratch("userdir");
  fs::create_directories(dir / "systems");
  std::ofstream(dir / "systems" / "spiral.json")
      << R"({"name": "spiral", "type": "expression", "F": ["-0.1*x1 + x2", "-x1 - 0.1*x2"],
            "cone": {"type": "quadratic", "P": [[-1, 0], [0, 1]]}})";
  const Run r = run({"--system", "spiral", "--systems-dir", (dir / "systems").string(), "--out",
                     (dir / "out").string(), "simulate", "--x0", "1,0", "--T", "2"});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "out" / "trajectory.csv"));
  const Run list = run({"--systems-dir", (dir / "systems").string(), "systems", "list"});
  CHECK(list.code == 0);
  CHECK(list.out.find("spiral") != std::string::npos);
  CHECK(list.out.find("smith_oscillator") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config hash") {
  const json a = {{"system", "harmonic"}, {"seed", 1}};
  CHECK(kcone::config_hash(a) == kcone::config_hash(json::parse(a.dump())));
  CHECK(kcone::config_hash(a) != kcone::config_hash({{"system", "harmonic"}, {"seed", 2}}));
}
