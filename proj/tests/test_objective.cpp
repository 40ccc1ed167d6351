#include <gtest/gtest.h>

#include <random>

#include "chemolb/errors.hpp"
#include "chemolb/objective.hpp"

using namespace chemolb;

namespace {

ProblemModel small_builtin(const std::string& name, int n, int steps) {
  ConfigDocument doc = builtin_config(name);
  doc.set("domain", "nx", std::to_string(n));
  doc.set("domain", "ny", std::to_string(n));
  doc.set("time", "steps", std::to_string(steps));
  return load_model(doc);
}

ObjectiveSpec tracking_spec(const ProblemModel& m, const ForwardSolver& s, double fill) {
  ObjectiveSpec spec = make_objective(m);
  for (int j = 0; j < m.num_fields(); ++j) {
    spec.a[j] = 1.0 + j;
    spec.b[j] = 0.5;
    spec.final_target[j].values.assign(s.context().nodes, fill);
    spec.running_target[j].values.assign(s.context().nodes, fill + 0.1);
  }
  for (auto& a : spec.alpha) a = 0.05;
  return spec;
}

}  // namespace

TEST(Quadrature, TrapezoidWeights) {
  EXPECT_EQ(quadrature_weight(0, 10), 0.5);
  EXPECT_EQ(quadrature_weight(10, 10), 0.5);
  EXPECT_EQ(quadrature_weight(4, 10), 1.0);
  // exact on affine functions of time
  const int steps = 13;
  const double dt = 0.07, T = steps * dt;
  double q = 0;
  for (int n = 0; n <= steps; ++n) q += dt * quadrature_weight(n, steps) * (3.0 - 2.0 * n * dt);
  EXPECT_NEAR(q, 3.0 * T - T * T, 1e-14);
}

TEST(Objective, ZeroAtTargetsAndReference) {
  const ProblemModel m = small_builtin("crime", 8, 10);
  const ForwardSolver s(m);
  const ControlVector f = make_controls(m, ControlSource::Initial);
  ObjectiveSpec spec = tracking_spec(m, s, 0.0);
  set_targets_from_run(spec, s, f);
  spec.reference = f;
  EXPECT_EQ(evaluate_cost(s, spec, f), 0.0);
  const GradientResult g = assemble_gradient_discrete(s, spec, f);
  EXPECT_EQ(g.gradient.norm_inf(), 0.0);
}

TEST(Objective, RegularizationOfConstantOffset) {
  // unit square, T = 0.5, f - fr = 1 everywhere, alpha = 1: J = alpha * T * |Omega| = 0.5
  ConfigDocument doc;
  doc.set("domain", "nx", "10");
  doc.set("domain", "ny", "10");
  doc.set("domain", "h", "0.1");
  doc.set("time", "dt", "0.01");
  doc.set("time", "steps", "50");
  doc.set("species.u", "diffusion", "0.1");
  doc.set("species.u", "source", "f");
  doc.set("control.f", "initial", "1");
  doc.set("control.f", "reference", "0");
  const ProblemModel m = load_model(doc);
  const ForwardSolver s(m);
  ObjectiveSpec spec = make_objective(m);
  spec.alpha[0] = 1.0;
  const ControlVector f = make_controls(m, ControlSource::Initial);
  EXPECT_NEAR(regularization_cost(s, spec, f), 0.5, 1e-14);
  const ControlVector g = regularization_gradient(s, spec, f);
  for (double v : g.slots[0].values) EXPECT_NEAR(v, 2.0 * 0.5 * 0.01, 1e-15);
  // finite difference of the quadratic is exact up to rounding
  ControlVector fp = f;
  fp.slots[0].values[17] += 1e-4;
  EXPECT_NEAR((regularization_cost(s, spec, fp) - 0.5) / 1e-4, g.slots[0].values[17] + 1e-4 * 0.005, 1e-9);
}

TEST(Objective, MatchesBruteForceQuadrature) {
  const ProblemModel m = small_builtin("attraction_repulsion", 6, 8);
  const ForwardSolver s(m);
  const SolverContext& c = s.context();
  const ControlVector f = make_controls(m, ControlSource::Initial);
  ObjectiveSpec spec = tracking_spec(m, s, 0.3);
  spec.reference = f.zeros_like();
  const Trajectory traj = s.run(f);
  const double h2 = c.grid.h * c.grid.h;
  double J = 0;
  for (int n = 0; n <= c.steps; ++n) {
    const auto y = traj.fields(n);
    const double w = (n == 0 || n == c.steps) ? 0.5 * c.dt : c.dt;
    for (int j = 0; j < c.num_fields; ++j)
      for (int i = 0; i < c.nodes; ++i) {
        const double v = y[static_cast<std::size_t>(j) * c.nodes + i];
        J += w * h2 * 0.5 * spec.b[j] * (v - 0.4) * (v - 0.4);
        if (n == c.steps) J += h2 * 0.5 * spec.a[j] * (v - 0.3) * (v - 0.3);
      }
    for (int p = 0; p < m.num_controls(); ++p)
      for (int i = 0; i < c.nodes; ++i) {
        const double e = f.at(p, n, i);
        J += w * h2 * spec.alpha[p] * e * e;
      }
  }
  EXPECT_NEAR(evaluate_cost(s, spec, traj), J, 1e-13 * J);
  EXPECT_NEAR(evaluate_cost(s, spec, f), J, 1e-13 * J);
}

TEST(Objective, ScalingEquivariance) {
  const ProblemModel m = small_builtin("two_species", 8, 10);
  const ForwardSolver s(m);
  const ControlVector f = make_controls(m, ControlSource::Initial);
  const ObjectiveSpec spec = tracking_spec(m, s, 0.2);
  const GradientResult g1 = assemble_gradient_discrete(s, spec, f);
  const GradientResult g3 = assemble_gradient_discrete(s, spec.scaled(3.0), f);
  EXPECT_NEAR(g3.J, 3.0 * g1.J, 1e-13 * g3.J);
  const auto a = g1.gradient.flatten(), b = g3.gradient.flatten();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 3.0 * a[i], 1e-12 * (1.0 + std::fabs(b[i])));
}

TEST(Objective, ValidationRejectsDegenerateWeights) {
  const ProblemModel m = small_builtin("crime", 4, 2);
  ObjectiveSpec spec = make_objective(m);
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.a[0] = 1.0;
  EXPECT_THROW(spec.validate(), ParameterError);
  spec.alpha[0] = 0.1;
  EXPECT_NO_THROW(spec.validate());
  spec.b[1] = -1.0;
  EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(Objective, LoadFromConfig) {
  ConfigDocument doc = builtin_config("crime");
  doc.set("domain", "nx", "6");
  doc.set("domain", "ny", "6");
  doc.set("time", "steps", "4");
  doc.set("objective", "terminal_weight.u", "2");
  doc.set("objective", "terminal_target.u", "x + y");
  doc.set("objective", "alpha.f2", "0.5");
  const ProblemModel m = load_model(doc);
  const ObjectiveSpec spec = load_objective(doc, m);
  EXPECT_EQ(spec.a[0], 2.0);
  EXPECT_EQ(spec.alpha[2], 0.5);
  EXPECT_DOUBLE_EQ(spec.final_target[0].values[7], 3.0 * m.domain.h);
  doc.set("objective", "terminal_weight.q", "1");
  EXPECT_THROW(load_objective(doc, m), ConfigError);
}

TEST(ContinuousGradient, RejectsStateDependentCoefficients) {
  const ProblemModel m = small_builtin("crime", 8, 4);
  const ObjectiveSpec spec = tracking_spec(m, ForwardSolver(m), 0.1);
  EXPECT_THROW(assemble_gradient_continuous(m, spec, make_controls(m, ControlSource::Initial)), UnsupportedModelError);
}
