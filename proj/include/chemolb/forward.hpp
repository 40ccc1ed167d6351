#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chemolb/collision.hpp"
#include "chemolb/lattice.hpp"
#include "chemolb/model.hpp"

namespace chemolb {

// Populations are stored species-major: pops[(s * nodes + node) * 9 + q].
// The same layout is reused for tangent and adjoint states; for the adjoint,
// `fprev` holds the cotangent of the stored force distributions.
struct StepState {
  std::vector<double> pops;
  std::vector<double> ode;    // ode[o * nodes + node]
  std::vector<double> fprev;  // force distributions of the previous step
};

// Immutable per-run setup shared by every kernel.
struct SolverContext {
  std::shared_ptr<const NodeModel> model;
  ModelLayout layout;
  Lattice lattice;
  MomentTransform transform;
  Grid grid;
  GradientOperator grad;
  int steps = 0;
  double dt = 0.0;
  int nodes = 0;
  int num_species = 0;
  int num_odes = 0;
  int num_fields = 0;
  int num_controls = 0;
  std::vector<int> kappa_x;                  // per species
  std::vector<int> grad_fields;              // field index per gradient slot
  std::vector<std::vector<int>> cross_slot;  // per species, per cross term
  std::vector<std::string> species_names;

  double time(int n) const { return n * dt; }
  std::size_t pop_size() const { return static_cast<std::size_t>(num_species) * nodes * kQ; }
  std::size_t ode_size() const { return static_cast<std::size_t>(num_odes) * nodes; }
  StepState zero_state() const;
};

// Scratch buffers reused across steps; one per concurrent caller.
struct Workspace {
  std::vector<double> fields, grads, post, fnew;
  std::vector<double> dfields, dgrads;
  std::vector<double> psistar, ybar, gbar, fbar_node;
  void ensure(const SolverContext& c);
};

struct ForwardDiagnostics {
  double cfl = 0.0;
  double max_deviation_ratio = 0.0;
  std::vector<std::string> warnings;
};

enum class RecordMode { Full, Stride, Checkpointed };

struct RecordPolicy {
  RecordMode mode = RecordMode::Full;
  int stride = 1;
  // Full storage up to 64^2 nodes x 2001 levels, checkpoints beyond.
  static RecordPolicy automatic(int nodes, int steps);
};

class ForwardSolver;

// Recorded forward run. Levels not stored are recomputed from checkpoints.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(const ForwardSolver* solver, ControlVector controls, RecordPolicy policy);

  int levels() const { return levels_; }
  const RecordPolicy& policy() const { return policy_; }
  bool stored(int n) const;
  // Full state at level n (fprev included only for checkpointed runs).
  const StepState& state(int n) const;
  // Macroscopic fields at level n, SoA: fields[j * nodes + node].
  std::vector<double> fields(int n) const;
  const ControlVector& controls() const { return controls_; }

 private:
  friend class ForwardSolver;
  const ForwardSolver* solver_ = nullptr;
  ControlVector controls_;
  RecordPolicy policy_;
  int levels_ = 0;
  int interval_ = 1;
  std::vector<int> index_;  // level -> slot in states_, or -1
  std::vector<StepState> states_;
  mutable int seg_start_ = -1;
  mutable std::vector<StepState> segment_;
};

using LevelObserver = std::function<void(int level, const StepState& state, const std::vector<double>& fields)>;

class ForwardSolver {
 public:
  ForwardSolver(std::shared_ptr<const NodeModel> model, const DomainSpec& domain, const TimeSpec& time,
                std::vector<double> initial_fields);
  explicit ForwardSolver(const ProblemModel& model);

  const SolverContext& context() const { return ctx_; }
  const Lattice& lattice() const { return ctx_.lattice; }
  const Grid& grid() const { return ctx_.grid; }
  int steps() const { return ctx_.steps; }
  double dt() const { return ctx_.dt; }
  const std::vector<double>& initial_fields() const { return initial_fields_; }
  const ForwardDiagnostics& setup_diagnostics() const { return diag_; }

  StepState initial_state(const ControlVector& f) const;
  void step(const ControlVector& f, int n, const StepState& in, StepState& out, Workspace& ws) const;
  std::vector<double> fields(const StepState& s) const;

  // Runs all steps; the observer sees every level as it is produced.
  Trajectory run(const ControlVector& f, RecordPolicy policy = {}, const LevelObserver& observer = {},
                 ForwardDiagnostics* diag = nullptr) const;
  // Final state only.
  StepState run_final(const ControlVector& f, const LevelObserver& observer = {}) const;

 private:
  void setup(const DomainSpec& domain, const TimeSpec& time);
  SolverContext ctx_;
  std::vector<double> initial_fields_;
  ForwardDiagnostics diag_;
  double cfl_limit_ = 1.0;
  int deviation_every_ = 10;
  bool any_deviation_ = false;
};

// Initial fields from the model expressions, SoA.
std::vector<double> initial_fields(const ProblemModel& model);

// Sum over populations per species; ODE fields copied. Output SoA.
void recover_macroscopic(const SolverContext& c, const StepState& s, double* fields);
// Pull streaming with halfway bounce-back, and its exact transpose.
void stream_and_bounce(const SolverContext& c, const double* post, double* out);
void stream_and_bounce_transpose(const SolverContext& c, const double* in, double* post_bar);

// One explicit step n -> n+1 (OpenMP).
void forward_step(const SolverContext& c, const ControlVector& f, int n, const StepState& in, StepState& out,
                  Workspace& ws);
// Serial dense-matrix reference of forward_step.
void forward_step_reference(const SolverContext& c, const ControlVector& f, int n, const StepState& in,
                            StepState& out);
// Linearization of forward_step about `base` (level n).
void tangent_step(const SolverContext& c, const ControlVector& f, const ControlVector& df, int n,
                  const StepState& base, const StepState& din, StepState& dout, Workspace& ws);
// Exact transpose of tangent_step: maps the cotangent of level n+1 to level n and
// accumulates the control cotangent of level n into fbar.
void adjoint_step(const SolverContext& c, const ControlVector& f, int n, const StepState& base,
                  const StepState& abar_next, StepState& abar, ControlVector& fbar, Workspace& ws);

// Throws DivergenceError naming the first species with a non-finite value.
void check_finite(const SolverContext& c, const StepState& s, int step);

}  // namespace chemolb
