#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kcone/classify.hpp"
#include "kcone/cooperativity.hpp"

namespace kcone {

struct SurveyConfig {
  Box region;
  int n_points = 100;
  Sampler sampler = Sampler::Uniform;
  ClassifyConfig classify;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct SurveyRecord {
  int id = 0;
  Vec x0;
  OrbitClass result;
  bool failed = false;  // numeric failure other than escape
  std::string error;
};

struct DensityProbe {
  Vec center;
  double radius = 0.0;
  int hits = 0;
  int probes = 0;
};

struct SurveyReport {
  std::vector<SurveyRecord> records;
  // Over records that neither escaped nor failed, keyed by class name.
  std::vector<std::pair<std::string, double>> fractions;
  int classified = 0;
  int escaped = 0;
  int failed = 0;
  int periodic_without_witness = 0;
  // Pseudo-ordered, convergent or periodic, over classified records.
  double fraction_generic = 0.0;
  std::vector<DensityProbe> density_probes;
};

// Initial point of record `id`; depends only on the config.
std::vector<Vec> survey_points(const SurveyConfig& cfg);

// Per-point failures are recorded; WitnessFailedVerification propagates.
SurveyReport run_survey(const SystemDef& system, const ConeSpec& cone,
                        const SurveyConfig& cfg);

// Probes balls around Unordered and escaped records. A hit is a probe
// classified PseudoOrdered, ConvergesToEquilibrium or Periodic with a witness.
void density_probe(const SystemDef& system, const ConeSpec& cone, SurveyReport& report,
                   double radius, int probes_per_point, const SurveyConfig& cfg);

bool density_ok(const SurveyReport& report);

double hausdorff_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);

struct CycleCluster {
  std::vector<int> members;  // record ids
  double mean_period = 0.0;
  double diameter = 0.0;
};

struct PbReport {
  std::optional<double> fraction_periodic;  // nullopt: no equilibrium-free records
  int denominator = 0;
  int periodic = 0;
  std::vector<double> periods;
  std::vector<std::pair<double, int>> histogram;  // bin centre, count
  std::vector<CycleCluster> clusters;
};

// Throws RankMismatch unless the cone has rank 2.
PbReport pb_analysis(const SystemDef& system, const ConeSpec& cone,
                     const SurveyReport& report, const ClassifyConfig& cfg,
                     double cluster_factor = 0.1, int bins = 10);
PbReport pb_survey(const SystemDef& system, const ConeSpec& cone, const SurveyConfig& cfg);

// Relative change of the detected period when the integrator step is halved,
// starting from a point on the cycle. Throws NotConverged if either run fails
// to detect a period.
double period_step_halving(const SystemDef& system, const Vec& on_cycle,
                           const ClassifyConfig& cfg);

void write_survey_csv(std::ostream& os, const SurveyReport& report, int n);
void write_fraction_table(std::ostream& os, const SurveyReport& report);
nlohmann::json survey_summary(const SurveyReport& report, const SurveyConfig& cfg);
nlohmann::json to_json(const PbReport& pb);

nlohmann::json to_json(const SurveyConfig& cfg);
// Keys: region ({lo, hi}; default: the system box), n_points, sampler, classify.
SurveyConfig survey_config_from_json(const nlohmann::json& j, const SystemDef& system);

}  // namespace kcone
