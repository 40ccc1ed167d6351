#pragma once

#include <string>
#include <vector>

#include "chemolb/adjoint.hpp"
#include "chemolb/config.hpp"
#include "chemolb/forward.hpp"
#include "chemolb/model.hpp"

namespace chemolb {

// A target field: one value per node, or one per level and node.
struct TargetField {
  std::vector<double> values;
  bool time_dependent = false;
  double at(int level, int node, int nodes) const {
    return time_dependent ? values[static_cast<std::size_t>(level) * nodes + node] : values[node];
  }
};

// J = sum_j a_j/2 |y_j(T) - yf_j|^2 + int_0^T [sum_j b_j/2 |y_j - yd_j|^2 + sum_p alpha_p |f_p - fr_p|^2],
// with midpoint sums in space and the trapezoidal rule in time.
struct ObjectiveSpec {
  std::vector<double> a;                  // per field
  std::vector<double> b;                  // per field
  std::vector<TargetField> final_target;  // per field
  std::vector<TargetField> running_target;
  std::vector<double> alpha;  // per control slot
  ControlVector reference;

  // Throws ParameterError unless sum(a + b) > 0 and sum(alpha) > 0.
  void validate() const;
  ObjectiveSpec scaled(double lambda) const;
};

double quadrature_weight(int n, int steps);

// Zero weights, zero targets, references from the model.
ObjectiveSpec make_objective(const ProblemModel& model);
// Reads the [objective] section. "targets = truth" replaces the targets by a
// forward run with the truth controls.
ObjectiveSpec load_objective(const ConfigDocument& doc, const ProblemModel& model);
// Targets from a forward run with the given controls (all levels).
void set_targets_from_run(ObjectiveSpec& spec, const ForwardSolver& solver, const ControlVector& f);

// Accumulates J while the forward run produces levels.
class CostAccumulator {
 public:
  CostAccumulator(const ForwardSolver& solver, const ObjectiveSpec& spec);
  void observe(int level, const std::vector<double>& fields);
  double state_cost() const { return state_; }

 private:
  const ForwardSolver& solver_;
  const ObjectiveSpec& spec_;
  double state_ = 0.0;
};

double regularization_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f);
double evaluate_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f);
double evaluate_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const Trajectory& traj);

// Adjoint seeds of the state terms, in units of 1/h^2.
AdjointSeed objective_seed(const ForwardSolver& solver, const ObjectiveSpec& spec);
// d(regularization)/df, exact.
ControlVector regularization_gradient(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f);

struct GradientResult {
  double J = 0.0;
  ControlVector gradient;
};

// Discrete-adjoint gradient of J_h (exact Euclidean gradient w.r.t. the
// stored control values).
GradientResult assemble_gradient_discrete(const ForwardSolver& solver, const ObjectiveSpec& spec,
                                          const ControlVector& f, RecordPolicy policy = {});
GradientResult assemble_gradient_discrete(const ForwardSolver& solver, const ObjectiveSpec& spec,
                                          const Trajectory& traj, double J, const AdjointObserver& observer = {});

// Linearized cost change along df through the sensitivity solver.
double tangent_directional_derivative(const ForwardSolver& solver, const ObjectiveSpec& spec, const Trajectory& traj,
                                      const ControlVector& df);

// Continuous-adjoint gradient: the adjoint PDE is solved by reversing time and
// running the forward lattice solver on the adjoint coefficients. Requires
// constant D, constant cross tensors, constant flux Jacobian and no ODE fields.
// The result is the L2(Q) gradient density mapped to the stored values with
// the same quadrature weights as the discrete route.
GradientResult assemble_gradient_continuous(const ProblemModel& model, const ObjectiveSpec& spec,
                                            const ControlVector& f);

}  // namespace chemolb
