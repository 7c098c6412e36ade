#include "kcone/types.hpp"

namespace kcone {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NearSingular: return "NearSingular";
    case ErrorCode::DegenerateSignature: return "DegenerateSignature";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::NonOrthonormalFrame: return "NonOrthonormalFrame";
    case ErrorCode::StepLimitExceeded: return "StepLimitExceeded";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::RankCollapse: return "RankCollapse";
    case ErrorCode::UnknownSystemName: return "UnknownSystemName";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::RankMismatch: return "RankMismatch";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::BracketTooNarrow: return "BracketTooNarrow";
    case ErrorCode::WitnessFailedVerification: return "WitnessFailedVerification";
    case ErrorCode::EvaluationFailure: return "EvaluationFailure";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Box make_box(const Vec& lo, const Vec& hi) {
  require(lo.size() == hi.size() && lo.size() > 0, ErrorCode::DimensionMismatch,
          "box: lo and hi must have the same positive dimension");
  require((lo.array() <= hi.array()).all(), ErrorCode::InvalidArgument,
          "box: lo must not exceed hi");
  return Box{lo, hi};
}

Box cube(Eigen::Index n, double lo, double hi) {
  return make_box(Vec::Constant(n, lo), Vec::Constant(n, hi));
}

}  // namespace kcone
