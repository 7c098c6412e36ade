#pragma once

// Internal stepping engine shared by the state, tangent and U^{pq}
// integrations. Works on a flat augmented state vector.

#include <functional>

#include "kcone/flow.hpp"

namespace kcone::detail {

using Rhs = std::function<void(const Vec& y, Vec& dy)>;

struct StepControl {
  double h_next = 0.0;  // adaptive proposal carried between segments
  long steps = 0;
};

// Advances y by `duration` > 0 along y' = f(y). The first `guard` components
// are checked against the blow-up threshold after every accepted step; all
// components must stay finite.
void advance(const Rhs& f, Vec& y, double duration, const IntegratorConfig& cfg,
             StepControl& ctl, Eigen::Index guard);

}  // namespace kcone::detail
