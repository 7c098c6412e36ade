#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace kcone {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  NotSymmetric,
  NearSingular,
  DegenerateSignature,
  NoConvergence,
  NonOrthonormalFrame,
  StepLimitExceeded,
  NonFiniteState,
  RankCollapse,
  UnknownSystemName,
  NotConverged,
  IllConditioned,
  RankMismatch,
  EmptySample,
  BracketTooNarrow,
  WitnessFailedVerification,
  EvaluationFailure,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// Every library failure is reported through this type; `code()` is stable
// and is what the CLI maps onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

// Axis-aligned box [lo, hi].
struct Box {
  Vec lo;
  Vec hi;

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Vec& x) const {
    return x.size() == lo.size() && (x.array() >= lo.array()).all() &&
           (x.array() <= hi.array()).all();
  }
  Vec center() const { return 0.5 * (lo + hi); }
};

Box make_box(const Vec& lo, const Vec& hi);
Box cube(Eigen::Index n, double lo, double hi);

}  // namespace kcone
