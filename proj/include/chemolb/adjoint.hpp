#pragma once

#include <functional>

#include "chemolb/forward.hpp"

namespace chemolb {

// Cotangent sources of a scalar functional of the trajectory.
struct AdjointSeed {
  // Sets the cotangent of the final level (state is zeroed beforehand).
  std::function<void(const std::vector<double>& fields, StepState& abar)> terminal;
  // Adds the cotangent contribution of level n < N.
  std::function<void(int n, const std::vector<double>& fields, StepState& abar)> running;
};

using AdjointObserver = std::function<void(int level, const StepState& abar)>;

// Backward sweep N -> 0. Returns the control cotangent accumulated from the
// dynamics (in the same scaling as the seed).
ControlVector run_adjoint(const ForwardSolver& solver, const Trajectory& traj, const AdjointSeed& seed,
                          const AdjointObserver& observer = {});

// Adds value v_j to every population of species j and to ODE field j.
void add_field_cotangent(const SolverContext& c, int field, const double* values, double scale, StepState& abar);

}  // namespace chemolb
