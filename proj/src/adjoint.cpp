#include "chemolb/adjoint.hpp"

#include <cmath>

#include "chemolb/errors.hpp"

namespace chemolb {

void add_field_cotangent(const SolverContext& c, int field, const double* values, double scale, StepState& abar) {
  const int N = c.nodes;
  if (field < c.num_species) {
    double* p = abar.pops.data() + static_cast<std::size_t>(field) * N * kQ;
    for (int node = 0; node < N; ++node) {
      const double v = scale * values[node];
      for (int q = 0; q < kQ; ++q) p[static_cast<std::size_t>(node) * kQ + q] += v;
    }
  } else {
    double* p = abar.ode.data() + static_cast<std::size_t>(field - c.num_species) * N;
    for (int node = 0; node < N; ++node) p[node] += scale * values[node];
  }
}

ControlVector run_adjoint(const ForwardSolver& solver, const Trajectory& traj, const AdjointSeed& seed,
                          const AdjointObserver& observer) {
  const SolverContext& c = solver.context();
  const int N = c.steps;
  for (int n = 0; n < traj.levels(); ++n) {
    if (!traj.stored(n)) throw PreconditionError("adjoint sweep needs every trajectory level");
  }
  ControlVector fbar = traj.controls().zeros_like();
  Workspace ws;
  StepState next = c.zero_state(), cur = c.zero_state();
  if (seed.terminal) seed.terminal(traj.fields(N), next);
  if (observer) observer(N, next);
  for (int n = N - 1; n >= 0; --n) {
    const StepState& base = traj.state(n);
    adjoint_step(c, traj.controls(), n, base, next, cur, fbar, ws);
    if (seed.running) seed.running(n, solver.fields(base), cur);
    for (int s = 0; s < c.num_species; ++s) {
      const double* p = cur.pops.data() + static_cast<std::size_t>(s) * c.nodes * kQ;
      for (std::size_t i = 0; i < static_cast<std::size_t>(c.nodes) * kQ; ++i) {
        if (!std::isfinite(p[i])) {
          throw DivergenceError(n, c.species_names[s], "non-finite adjoint population at step " + std::to_string(n));
        }
      }
    }
    if (observer) observer(n, cur);
    std::swap(cur, next);
  }
  return fbar;
}

}  // namespace chemolb
