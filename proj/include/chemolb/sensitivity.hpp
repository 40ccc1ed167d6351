#pragma once

#include <functional>

#include "chemolb/forward.hpp"

namespace chemolb {

using TangentObserver = std::function<void(int level, const StepState& dstate, const std::vector<double>& dfields)>;

// Propagates a control perturbation through the linearized scheme, starting
// from a zero perturbation. Requires every level of `traj`.
StepState run_sensitivity(const ForwardSolver& solver, const Trajectory& traj, const ControlVector& df,
                          const TangentObserver& observer = {});

}  // namespace chemolb
