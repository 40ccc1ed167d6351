#include "chemolb/objective.hpp"

#include <cmath>
#include <fmt/format.h>

#include "chemolb/errors.hpp"
#include "chemolb/sensitivity.hpp"

namespace chemolb {

double quadrature_weight(int n, int steps) { return (n == 0 || n == steps) ? 0.5 : 1.0; }

void ObjectiveSpec::validate() const {
  double ab = 0.0, al = 0.0;
  for (double v : a) {
    if (v < 0.0) throw ParameterError("objective: terminal weights must be non-negative");
    ab += v;
  }
  for (double v : b) {
    if (v < 0.0) throw ParameterError("objective: running weights must be non-negative");
    ab += v;
  }
  for (double v : alpha) {
    if (v < 0.0) throw ParameterError("objective: control weights must be non-negative");
    al += v;
  }
  if (!(ab > 0.0)) throw ParameterError("objective: at least one state weight (terminal or running) must be positive");
  if (!(al > 0.0)) throw ParameterError("objective: at least one control weight alpha must be positive");
}

ObjectiveSpec ObjectiveSpec::scaled(double lambda) const {
  ObjectiveSpec s = *this;
  for (double& v : s.a) v *= lambda;
  for (double& v : s.b) v *= lambda;
  for (double& v : s.alpha) v *= lambda;
  return s;
}

ObjectiveSpec make_objective(const ProblemModel& model) {
  ObjectiveSpec s;
  const int nf = model.num_fields();
  const int N = model.domain.nx * model.domain.ny;
  s.a.assign(nf, 0.0);
  s.b.assign(nf, 0.0);
  s.final_target.assign(nf, TargetField{std::vector<double>(N, 0.0), false});
  s.running_target = s.final_target;
  s.alpha.assign(model.num_controls(), 0.0);
  s.reference = make_controls(model, ControlSource::Reference);
  return s;
}

namespace {

std::vector<double> eval_on_grid(const Expression& e, const ProblemModel& m, int level) {
  const int N = m.domain.nx * m.domain.ny;
  const auto prog = expr::Program::compile(e, {"x", "y", "t"});
  std::vector<double> out(N);
  for (int i = 0; i < N; ++i) {
    const double env[3] = {(i % m.domain.nx + 0.5) * m.domain.h, (i / m.domain.nx + 0.5) * m.domain.h,
                           level * m.time.dt};
    out[i] = prog.eval(env);
  }
  return out;
}

Expression parse_in(const ConfigDocument& doc, const std::string& key, const ProblemModel& m,
                    const std::vector<std::string>& allowed) {
  const std::string text = doc.get_string("objective", key);
  Expression e;
  try {
    e = Expression::parse(text).substitute(m.params);
  } catch (const ParameterError& err) {
    throw ConfigError("objective", key, err.what());
  }
  for (const auto& v : e.variables()) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      throw ConfigError("objective", key, fmt::format("unknown variable '{}'", v));
    }
  }
  return e;
}

}  // namespace

ObjectiveSpec load_objective(const ConfigDocument& doc, const ProblemModel& model) {
  ObjectiveSpec s = make_objective(model);
  const auto fields = model.field_names();
  const auto controls = model.control_names();
  const int levels = model.time.steps + 1;
  const int N = model.domain.nx * model.domain.ny;
  for (const auto& key : doc.keys("objective")) {
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    const std::string name = dot == std::string::npos ? "" : key.substr(dot + 1);
    if (key == "targets") continue;
    if (head == "terminal_weight" || head == "running_weight" || head == "terminal_target" ||
        head == "running_target") {
      const int j = model.field_index(name);
      if (j < 0) throw ConfigError("objective", key, fmt::format("unknown field '{}'", name));
      if (head == "terminal_weight") {
        s.a[j] = doc.get_double("objective", key);
      } else if (head == "running_weight") {
        s.b[j] = doc.get_double("objective", key);
      } else if (head == "terminal_target") {
        s.final_target[j].values = eval_on_grid(parse_in(doc, key, model, {"x", "y"}), model, model.time.steps);
      } else {
        const Expression e = parse_in(doc, key, model, {"x", "y", "t"});
        TargetField& t = s.running_target[j];
        t.time_dependent = e.depends_on("t");
        if (!t.time_dependent) {
          t.values = eval_on_grid(e, model, 0);
        } else {
          t.values.resize(static_cast<std::size_t>(levels) * N);
          for (int n = 0; n < levels; ++n) {
            const auto v = eval_on_grid(e, model, n);
            std::copy(v.begin(), v.end(), t.values.begin() + static_cast<std::size_t>(n) * N);
          }
        }
      }
    } else if (head == "alpha") {
      const int p = model.control_index(name);
      if (p < 0) throw ConfigError("objective", key, fmt::format("unknown control '{}'", name));
      s.alpha[p] = doc.get_double("objective", key);
    } else {
      throw ConfigError("objective", key, "unknown key");
    }
  }
  const std::string targets = doc.get_string("objective", "targets", "expressions");
  if (targets == "truth") {
    ForwardSolver solver(model);
    set_targets_from_run(s, solver, make_controls(model, ControlSource::Truth));
  } else if (targets != "expressions") {
    throw ConfigError("objective", "targets", "expected 'expressions' or 'truth'");
  }
  try {
    s.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("objective", "", e.what());
  }
  return s;
}

void set_targets_from_run(ObjectiveSpec& spec, const ForwardSolver& solver, const ControlVector& f) {
  const SolverContext& c = solver.context();
  const int N = c.nodes;
  const int levels = c.steps + 1;
  for (int j = 0; j < c.num_fields; ++j) {
    spec.running_target[j].time_dependent = true;
    spec.running_target[j].values.assign(static_cast<std::size_t>(levels) * N, 0.0);
  }
  solver.run_final(f, [&](int n, const StepState&, const std::vector<double>& fields) {
    for (int j = 0; j < c.num_fields; ++j) {
      std::copy(fields.begin() + static_cast<std::size_t>(j) * N, fields.begin() + static_cast<std::size_t>(j + 1) * N,
                spec.running_target[j].values.begin() + static_cast<std::size_t>(n) * N);
      if (n == c.steps) {
        spec.final_target[j].time_dependent = false;
        spec.final_target[j].values.assign(fields.begin() + static_cast<std::size_t>(j) * N,
                                           fields.begin() + static_cast<std::size_t>(j + 1) * N);
      }
    }
  });
}

CostAccumulator::CostAccumulator(const ForwardSolver& solver, const ObjectiveSpec& spec)
    : solver_(solver), spec_(spec) {}

void CostAccumulator::observe(int n, const std::vector<double>& fields) {
  const SolverContext& c = solver_.context();
  const int N = c.nodes;
  const double h2 = c.grid.h * c.grid.h;
  const double w = c.dt * quadrature_weight(n, c.steps);
  for (int j = 0; j < c.num_fields; ++j) {
    const double* y = fields.data() + static_cast<std::size_t>(j) * N;
    if (spec_.b[j] != 0.0) {
      double sum = 0.0;
      for (int i = 0; i < N; ++i) {
        const double d = y[i] - spec_.running_target[j].at(n, i, N);
        sum += d * d;
      }
      state_ += w * h2 * 0.5 * spec_.b[j] * sum;
    }
    if (n == c.steps && spec_.a[j] != 0.0) {
      double sum = 0.0;
      for (int i = 0; i < N; ++i) {
        const double d = y[i] - spec_.final_target[j].at(0, i, N);
        sum += d * d;
      }
      state_ += h2 * 0.5 * spec_.a[j] * sum;
    }
  }
}

double regularization_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f) {
  const SolverContext& c = solver.context();
  const double h2 = c.grid.h * c.grid.h;
  double J = 0.0;
  for (std::size_t p = 0; p < f.slots.size(); ++p) {
    if (spec.alpha[p] == 0.0) continue;
    const ControlData& d = f.slots[p];
    const ControlData& r = spec.reference.slots[p];
    for (int n = 0; n <= c.steps; ++n) {
      double sum = 0.0;
      for (int i = 0; i < c.nodes; ++i) {
        const double e = d.at(n, i) - r.at(n, i);
        sum += e * e;
      }
      J += c.dt * quadrature_weight(n, c.steps) * h2 * spec.alpha[p] * sum;
    }
  }
  return J;
}

ControlVector regularization_gradient(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f) {
  const SolverContext& c = solver.context();
  const double h2 = c.grid.h * c.grid.h;
  ControlVector g = f.zeros_like();
  for (std::size_t p = 0; p < f.slots.size(); ++p) {
    if (spec.alpha[p] == 0.0) continue;
    const ControlData& d = f.slots[p];
    const ControlData& r = spec.reference.slots[p];
    ControlData& gd = g.slots[p];
    for (int n = 0; n <= c.steps; ++n) {
      const double w = c.dt * quadrature_weight(n, c.steps) * h2 * 2.0 * spec.alpha[p];
      for (int i = 0; i < c.nodes; ++i) gd.values[d.offset(n, i)] += w * (d.at(n, i) - r.at(n, i));
    }
  }
  return g;
}

double evaluate_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const ControlVector& f) {
  spec.validate();
  CostAccumulator acc(solver, spec);
  solver.run_final(f, [&](int n, const StepState&, const std::vector<double>& fields) { acc.observe(n, fields); });
  return acc.state_cost() + regularization_cost(solver, spec, f);
}

double evaluate_cost(const ForwardSolver& solver, const ObjectiveSpec& spec, const Trajectory& traj) {
  spec.validate();
  CostAccumulator acc(solver, spec);
  for (int n = 0; n < traj.levels(); ++n) acc.observe(n, traj.fields(n));
  return acc.state_cost() + regularization_cost(solver, spec, traj.controls());
}

AdjointSeed objective_seed(const ForwardSolver& solver, const ObjectiveSpec& spec) {
  const SolverContext& c = solver.context();
  const int N = c.nodes;
  auto running = [&c, &spec, N](int n, const std::vector<double>& fields, StepState& abar) {
    const double w = c.dt * quadrature_weight(n, c.steps);
    std::vector<double> r(N);
    for (int j = 0; j < c.num_fields; ++j) {
      if (spec.b[j] == 0.0) continue;
      const double* y = fields.data() + static_cast<std::size_t>(j) * N;
      for (int i = 0; i < N; ++i) r[i] = y[i] - spec.running_target[j].at(n, i, N);
      add_field_cotangent(c, j, r.data(), w * spec.b[j], abar);
    }
  };
  AdjointSeed seed;
  seed.running = running;
  seed.terminal = [&c, &spec, N, running](const std::vector<double>& fields, StepState& abar) {
    std::vector<double> r(N);
    for (int j = 0; j < c.num_fields; ++j) {
      if (spec.a[j] == 0.0) continue;
      const double* y = fields.data() + static_cast<std::size_t>(j) * N;
      for (int i = 0; i < N; ++i) r[i] = y[i] - spec.final_target[j].at(0, i, N);
      add_field_cotangent(c, j, r.data(), spec.a[j], abar);
    }
    running(c.steps, fields, abar);
  };
  return seed;
}

GradientResult assemble_gradient_discrete(const ForwardSolver& solver, const ObjectiveSpec& spec,
                                          const Trajectory& traj, double J, const AdjointObserver& observer) {
  const SolverContext& c = solver.context();
  ControlVector fbar = run_adjoint(solver, traj, objective_seed(solver, spec), observer);
  if (fbar.slots.size() != spec.alpha.size()) throw InternalError("gradient shape mismatch");
  GradientResult r;
  r.J = J;
  r.gradient = regularization_gradient(solver, spec, traj.controls());
  r.gradient.axpy(c.grid.h * c.grid.h, fbar);
  return r;
}

GradientResult assemble_gradient_discrete(const ForwardSolver& solver, const ObjectiveSpec& spec,
                                          const ControlVector& f, RecordPolicy policy) {
  spec.validate();
  if (policy.mode == RecordMode::Stride) throw PreconditionError("gradient needs a full or checkpointed trajectory");
  CostAccumulator acc(solver, spec);
  const Trajectory traj =
      solver.run(f, policy, [&](int n, const StepState&, const std::vector<double>& fields) { acc.observe(n, fields); });
  const double J = acc.state_cost() + regularization_cost(solver, spec, f);
  return assemble_gradient_discrete(solver, spec, traj, J);
}

double tangent_directional_derivative(const ForwardSolver& solver, const ObjectiveSpec& spec, const Trajectory& traj,
                                      const ControlVector& df) {
  const SolverContext& c = solver.context();
  const int N = c.nodes;
  const double h2 = c.grid.h * c.grid.h;
  double dJ = 0.0;
  run_sensitivity(solver, traj, df, [&](int n, const StepState&, const std::vector<double>& dfields) {
    const std::vector<double> fields = traj.fields(n);
    const double w = c.dt * quadrature_weight(n, c.steps);
    for (int j = 0; j < c.num_fields; ++j) {
      const double* y = fields.data() + static_cast<std::size_t>(j) * N;
      const double* dy = dfields.data() + static_cast<std::size_t>(j) * N;
      if (spec.b[j] != 0.0) {
        double sum = 0.0;
        for (int i = 0; i < N; ++i) sum += (y[i] - spec.running_target[j].at(n, i, N)) * dy[i];
        dJ += w * h2 * spec.b[j] * sum;
      }
      if (n == c.steps && spec.a[j] != 0.0) {
        double sum = 0.0;
        for (int i = 0; i < N; ++i) sum += (y[i] - spec.final_target[j].at(0, i, N)) * dy[i];
        dJ += h2 * spec.a[j] * sum;
      }
    }
  });
  return dJ + regularization_gradient(solver, spec, traj.controls()).dot(df);
}

}  // namespace chemolb
