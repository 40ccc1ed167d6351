#include "chemolb/sensitivity.hpp"

#include "chemolb/errors.hpp"

namespace chemolb {

StepState run_sensitivity(const ForwardSolver& solver, const Trajectory& traj, const ControlVector& df,
                          const TangentObserver& observer) {
  const SolverContext& c = solver.context();
  if (df.slots.size() != traj.controls().slots.size()) throw PreconditionError("perturbation shape mismatch");
  for (int n = 0; n < traj.levels(); ++n) {
    if (!traj.stored(n)) throw PreconditionError("sensitivity run needs every trajectory level");
  }
  Workspace ws;
  StepState cur = c.zero_state(), next;
  if (observer) observer(0, cur, solver.fields(cur));
  for (int n = 0; n < c.steps; ++n) {
    tangent_step(c, traj.controls(), df, n, traj.state(n), cur, next, ws);
    std::swap(cur, next);
    if (observer) observer(n + 1, cur, solver.fields(cur));
  }
  return cur;
}

}  // namespace chemolb
