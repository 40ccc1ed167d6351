#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chemolb/errors.hpp"
#include "chemolb/forward.hpp"
#include "chemolb/io.hpp"
#include "chemolb/oracle.hpp"

using namespace chemolb;

namespace {

ProblemModel scalar_model(int n, double dt, int steps, const std::string& diffusion, const std::string& initial,
                          const std::string& source = "0") {
  ConfigDocument doc;
  doc.set("domain", "nx", std::to_string(n));
  doc.set("domain", "ny", std::to_string(n));
  doc.set("domain", "h", format_double(1.0 / n));
  doc.set("time", "dt", format_double(dt));
  doc.set("time", "steps", std::to_string(steps));
  doc.set("species.u", "diffusion", diffusion);
  doc.set("species.u", "initial", initial);
  doc.set("species.u", "source", source);
  return load_model(doc);
}

ProblemModel small_builtin(const std::string& name, int n, int steps) {
  ConfigDocument doc = builtin_config(name);
  doc.set("domain", "nx", std::to_string(n));
  doc.set("domain", "ny", std::to_string(n));
  doc.set("time", "steps", std::to_string(steps));
  return load_model(doc);
}

std::vector<double> mass(const SolverContext& c, const std::vector<double>& y) {
  std::vector<double> m(c.num_fields, 0.0);
  for (int j = 0; j < c.num_fields; ++j)
    for (int i = 0; i < c.nodes; ++i) m[j] += y[static_cast<std::size_t>(j) * c.nodes + i];
  return m;
}

}  // namespace

TEST(Forward, ZeroDataStaysZero) {
  const ProblemModel m = scalar_model(12, 0.002, 50, "0.1", "0");
  const ForwardSolver s(m);
  const auto y = s.fields(s.run_final(make_controls(m, ControlSource::Initial)));
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Forward, ConstantIsFixedPoint) {
  const ProblemModel m = scalar_model(12, 0.002, 50, "0.1", "0.7");
  const ForwardSolver s(m);
  const auto y = s.fields(s.run_final(make_controls(m, ControlSource::Initial)));
  for (double v : y) EXPECT_NEAR(v, 0.7, 1e-14);
}

TEST(Forward, MassConservedWithoutSources) {
  for (const char* name : {"crime", "attraction_repulsion", "two_species"}) {
    const ProblemModel m = small_builtin(name, 16, 100).without_sources();
    const ForwardSolver s(m);
    std::vector<double> m0;
    double drift = 0.0;
    s.run_final(make_controls(m, ControlSource::Initial), [&](int n, const StepState&, const std::vector<double>& y) {
      const auto mm = mass(s.context(), y);
      if (n == 0) m0 = mm;
      for (std::size_t j = 0; j < mm.size(); ++j) drift = std::max(drift, std::fabs(mm[j] - m0[j]) / std::fabs(m0[j]));
    });
    EXPECT_LE(drift, 1e-12) << name;
  }
}

TEST(Streaming, InteriorShiftAndWallReflection) {
  const ProblemModel m = scalar_model(6, 0.01, 1, "0.1", "0");
  const ForwardSolver s(m);
  const SolverContext& c = s.context();
  const Grid& g = c.grid;
  std::vector<double> post(c.pop_size(), 0.0), out(c.pop_size(), 0.0);
  const int interior = g.index(2, 3);
  post[static_cast<std::size_t>(interior) * kQ + 1] = 1.0;  // +x
  post[static_cast<std::size_t>(interior) * kQ + 6] = 2.0;  // diagonal
  const int wall = g.index(0, 2);
  post[static_cast<std::size_t>(wall) * kQ + 3] = 5.0;  // -x into the wall
  stream_and_bounce(c, post.data(), out.data());
  EXPECT_EQ(out[static_cast<std::size_t>(g.index(3, 3)) * kQ + 1], 1.0);
  EXPECT_EQ(out[static_cast<std::size_t>(g.nbr(interior, 6)) * kQ + 6], 2.0);
  EXPECT_EQ(out[static_cast<std::size_t>(wall) * kQ + 1], 5.0);
  double total_in = 0, total_out = 0;
  for (double v : post) total_in += v;
  for (double v : out) total_out += v;
  EXPECT_EQ(total_in, total_out);
}

TEST(Streaming, TransposeIsExact) {
  const ProblemModel m = small_builtin("crime", 7, 1);
  const ForwardSolver s(m);
  const SolverContext& c = s.context();
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> a(c.pop_size()), b(c.pop_size()), Sa(c.pop_size()), STb(c.pop_size(), 0.0);
  for (auto& v : a) v = nd(rng);
  for (auto& v : b) v = nd(rng);
  stream_and_bounce(c, a.data(), Sa.data());
  stream_and_bounce_transpose(c, b.data(), STb.data());
  double l = 0, r = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    l += Sa[i] * b[i];
    r += a[i] * STb[i];
  }
  EXPECT_NEAR(l, r, 1e-12 * std::fabs(l));
}

TEST(Forward, RecoverMacroscopicSumsPopulations) {
  const ProblemModel m = small_builtin("tumor", 6, 3);
  const ForwardSolver s(m);
  const SolverContext& c = s.context();
  const StepState st = s.run_final(make_controls(m, ControlSource::Initial));
  std::vector<double> y(static_cast<std::size_t>(c.num_fields) * c.nodes);
  recover_macroscopic(c, st, y.data());
  for (int sp = 0; sp < c.num_species; ++sp)
    for (int i = 0; i < c.nodes; ++i) {
      double sum = 0;
      for (int q = 0; q < kQ; ++q) sum += st.pops[(static_cast<std::size_t>(sp) * c.nodes + i) * kQ + q];
      EXPECT_DOUBLE_EQ(y[static_cast<std::size_t>(sp) * c.nodes + i], sum);
    }
  for (int i = 0; i < c.nodes; ++i) EXPECT_EQ(y[static_cast<std::size_t>(c.num_species) * c.nodes + i], st.ode[i]);
}

TEST(Forward, ParallelMatchesReference) {
  for (const char* name : {"crime", "attraction_repulsion", "two_species", "tumor"}) {
    const ProblemModel m = small_builtin(name, 10, 5);
    const ForwardSolver s(m);
    const SolverContext& c = s.context();
    const ControlVector f = make_controls(m, ControlSource::Initial);
    StepState a = s.initial_state(f), b = a, na = c.zero_state(), nb = c.zero_state();
    Workspace ws;
    ws.ensure(c);
    for (int n = 0; n < 5; ++n) {
      forward_step(c, f, n, a, na, ws);
      forward_step_reference(c, f, n, b, nb);
      std::swap(a, na);
      std::swap(b, nb);
    }
    double worst = 0;
    for (std::size_t i = 0; i < a.pops.size(); ++i) worst = std::max(worst, std::fabs(a.pops[i] - b.pops[i]));
    for (std::size_t i = 0; i < a.ode.size(); ++i) worst = std::max(worst, std::fabs(a.ode[i] - b.ode[i]));
    EXPECT_LE(worst, 1e-13) << name;
  }
}

TEST(Forward, CheckpointedTrajectoryMatchesFull) {
  const ProblemModel m = small_builtin("attraction_repulsion", 10, 30);
  const ForwardSolver s(m);
  const ControlVector f = make_controls(m, ControlSource::Initial);
  const Trajectory full = s.run(f);
  RecordPolicy cp;
  cp.mode = RecordMode::Checkpointed;
  const Trajectory chk = s.run(f, cp);
  for (int n : {30, 0, 17, 3, 29, 12}) EXPECT_EQ(full.fields(n), chk.fields(n)) << n;
}

TEST(Forward, HeatKernelAccuracy) {
  const int n = 128;
  const double sigma = 0.05, t0 = 0.01, h = 1.0 / n, dt = h * h / (6.0 * sigma);
  const int steps = 192;
  const ProblemModel m = scalar_model(n, dt, steps, "0.05", "exp(-((x - 0.5)^2 + (y - 0.5)^2)/0.002)");
  const ForwardSolver s(m);
  const auto y = s.fields(s.run_final(make_controls(m, ControlSource::Initial)));
  const double t = t0 + steps * dt;
  std::vector<double> exact(y.size());
  for (int i = 0; i < s.context().nodes; ++i) {
    const double dx = s.grid().x(i) - 0.5, dy = s.grid().y(i) - 0.5;
    exact[i] = t0 / t * std::exp(-(dx * dx + dy * dy) / (4.0 * sigma * t));
  }
  EXPECT_LE(oracle::relative_l2(y, exact), 1e-2);
}

TEST(Forward, BlowUpRaisesDivergence) {
  const ProblemModel m = scalar_model(8, 0.01, 400, "0.1", "1", "50*u^2");
  const ForwardSolver s(m);
  try {
    s.run_final(make_controls(m, ControlSource::Initial));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.species(), "u");
    EXPECT_GT(e.step(), 0);
    EXPECT_LT(e.step(), 400);
  }
}
