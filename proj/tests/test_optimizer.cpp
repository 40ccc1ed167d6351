#include <gtest/gtest.h>

#include <random>

#include "chemolb/errors.hpp"
#include "chemolb/optimizer.hpp"

using namespace chemolb;

namespace {

// 0.5 x^T A x - b^T x on a box.
class Quadratic : public Problem {
 public:
  Quadratic(int n, double lo, double hi, unsigned seed) : lo_(VecX::Constant(n, lo)), hi_(VecX::Constant(n, hi)) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd R(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) R(i, j) = nd(rng);
    A_ = R.transpose() * R + n * Eigen::MatrixXd::Identity(n, n);
    b_.resize(n);
    for (int i = 0; i < n; ++i) b_[i] = nd(rng) * n;
  }
  int size() const override { return static_cast<int>(b_.size()); }
  double value(const VecX& x) override { return 0.5 * x.dot(A_ * x) - b_.dot(x); }
  double value_and_gradient(const VecX& x, VecX& g) override {
    g = A_ * x - b_;
    return value(x);
  }
  VecX lower() const override { return lo_; }
  VecX upper() const override { return hi_; }
  VecX minimizer() const { return A_.ldlt().solve(b_); }

 private:
  Eigen::MatrixXd A_;
  VecX b_, lo_, hi_;
};

OptimizerConfig config(Method m, int max_iter = 500, double tol = 1e-7) {
  OptimizerConfig c;
  c.method = m;
  c.max_iter = max_iter;
  c.tol = tol;
  return c;
}

}  // namespace

TEST(LineSearch, QuadraticVertex) {
  auto J = [](double z) { return 1.0 + (z - 2.0) * (z - 2.0); };
  const auto z = line_search_quadratic(J(0), 1.0, J(1.0), 3.5, J(3.5), 1e-12, 1e12);
  ASSERT_TRUE(z.has_value());
  EXPECT_NEAR(*z, 2.0, 1e-14);
  EXPECT_EQ(*line_search_quadratic(J(0), 1.0, J(1.0), 3.5, J(3.5), 0.0, 1.5), 1.5);
}

TEST(LineSearch, NonPositiveCurvatureGivesNothing) {
  auto J = [](double z) { return 1.0 - (z - 2.0) * (z - 2.0); };
  EXPECT_FALSE(line_search_quadratic(J(0), 1.0, J(1.0), 2.0, J(2.0), 0.0, 10.0).has_value());
  EXPECT_FALSE(line_search_quadratic(0.0, 1.0, -1.0, 2.0, -2.0, 0.0, 10.0).has_value());  // linear
}

TEST(Projection, ClampsAndIsIdempotent) {
  const VecX lo = VecX::Constant(4, -1.0), hi = VecX::Constant(4, 2.0);
  VecX x(4);
  x << -5, 0.5, 3, 2;
  const VecX p = project(x, lo, hi);
  EXPECT_EQ(p, (VecX(4) << -1, 0.5, 2, 2).finished());
  EXPECT_EQ(project(p, lo, hi), p);
}

TEST(Optimizer, AllMethodsReachUnconstrainedMinimum) {
  for (Method m : {Method::Gradient, Method::CgFR, Method::CgPR, Method::CgHS, Method::CgDY}) {
    Quadratic q(12, -1e3, 1e3, 4);
    const OptimizeResult r = optimize(q, VecX::Zero(12), config(m, 2000));
    EXPECT_TRUE(r.converged) << method_name(m) << ": " << r.message;
    EXPECT_LE((r.x - q.minimizer()).norm(), 1e-6 * q.minimizer().norm()) << method_name(m);
  }
}

TEST(Optimizer, ConjugateGradientBeatsSteepestDescent) {
  Quadratic a(20, -1e3, 1e3, 8), b(20, -1e3, 1e3, 8);
  const auto gd = optimize(a, VecX::Zero(20), config(Method::Gradient, 2000));
  const auto cg = optimize(b, VecX::Zero(20), config(Method::CgPR, 2000));
  EXPECT_LT(cg.records.size(), gd.records.size());
}

TEST(Optimizer, ArmijoNeverIncreasesCost) {
  for (Method m : {Method::CgFR, Method::CgPR, Method::CgHS, Method::CgDY}) {
    Quadratic q(10, -0.3, 0.3, 2);
    const OptimizeResult r = optimize(q, VecX::Zero(10), config(m, 60));
    for (std::size_t k = 1; k < r.records.size(); ++k) EXPECT_LE(r.records[k].J, r.records[k - 1].J) << method_name(m);
  }
}

TEST(Optimizer, BoxConstrainedSolutionIsStationary) {
  Quadratic q(10, -0.3, 0.3, 2);
  const OptimizeResult r = optimize(q, VecX::Zero(10), config(Method::CgPR, 500, 1e-9));
  // projected gradient optimality: x = P(x - g)
  const VecX pg = r.x - project(r.x - r.g, q.lower(), q.upper());
  EXPECT_LE(pg.norm(), 1e-8) << r.message;
  EXPECT_TRUE((r.x.array() >= -0.3).all() && (r.x.array() <= 0.3).all());
}

TEST(Optimizer, ZeroBetaIsSteepestDescentBitForBit) {
  Quadratic a(8, -1e3, 1e3, 5), b(8, -1e3, 1e3, 5);
  OptimizerConfig cb = config(Method::CgPR, 30, 0.0);
  cb.custom_beta = [](int, const VecX&, const VecX&, const VecX&) { return 0.0; };
  const auto gd = optimize(a, VecX::Ones(8), config(Method::Gradient, 30, 0.0));
  const auto zb = optimize(b, VecX::Ones(8), cb);
  ASSERT_EQ(gd.records.size(), zb.records.size());
  for (std::size_t k = 0; k < gd.records.size(); ++k) EXPECT_EQ(gd.records[k].J, zb.records[k].J);
  EXPECT_EQ(gd.x, zb.x);
}

TEST(Optimizer, ResumeContinuesBitForBit) {
  Quadratic q(10, -0.5, 0.5, 3);
  const auto full = optimize(q, VecX::Zero(10), config(Method::CgHS, 12, 0.0));
  std::optional<OptimizerState> saved;
  optimize(q, VecX::Zero(10), config(Method::CgHS, 12, 0.0), [&](const IterationRecord& r, const OptimizerState& s) {
    if (r.k == 5) saved = OptimizerState::from_json(s.to_json());
  });
  ASSERT_TRUE(saved);
  const auto resumed = optimize(q, VecX::Zero(10), config(Method::CgHS, 12, 0.0), {}, saved);
  EXPECT_EQ(resumed.x, full.x);
  EXPECT_EQ(resumed.J, full.J);
  EXPECT_EQ(resumed.records.back().k, full.records.back().k);
}

TEST(OptimizerState, JsonRoundTrip) {
  OptimizerState s;
  s.k = 7;
  s.J = 0.1 + 0.2;
  s.g0_norm = 3.0e-17;
  s.step_prev = 1.0 / 3.0;
  s.restart = false;
  s.x = (VecX(3) << 1.0 / 7.0, -2.5e300, 0.0).finished();
  s.g = VecX::Constant(3, std::nextafter(1.0, 2.0));
  s.g_prev = VecX::Zero(3);
  s.d_prev = -s.g;
  const OptimizerState r = OptimizerState::from_json(s.to_json());
  EXPECT_EQ(r.k, s.k);
  EXPECT_EQ(r.J, s.J);
  EXPECT_EQ(r.g0_norm, s.g0_norm);
  EXPECT_EQ(r.step_prev, s.step_prev);
  EXPECT_EQ(r.restart, s.restart);
  EXPECT_EQ(r.x, s.x);
  EXPECT_EQ(r.g, s.g);
  EXPECT_EQ(r.d_prev, s.d_prev);
  EXPECT_THROW(OptimizerState::from_json("{\"k\": 1}"), ConfigError);
}

TEST(OptimizerConfig, ParsesAndRejects) {
  ConfigDocument doc;
  doc.set("optimizer", "method", "cg-dy");
  doc.set("optimizer", "step_rule", "quadratic");
  doc.set("optimizer", "max_iter", "17");
  const OptimizerConfig c = load_optimizer_config(doc);
  EXPECT_EQ(c.method, Method::CgDY);
  EXPECT_EQ(c.step_rule, StepRule::Quadratic);
  EXPECT_EQ(c.max_iter, 17);
  doc.set("optimizer", "method", "newton");
  EXPECT_THROW(load_optimizer_config(doc), ConfigError);
  ConfigDocument bad;
  bad.set("optimizer", "max_iters", "3");
  EXPECT_THROW(load_optimizer_config(bad), ConfigError);
}

TEST(ControlProblem, RegularizationDominatedConvergesToReference) {
  ConfigDocument doc = builtin_config("crime");
  doc.set("domain", "nx", "6");
  doc.set("domain", "ny", "6");
  doc.set("time", "steps", "5");
  const ProblemModel m = load_model(doc);
  const ForwardSolver s(m);
  ObjectiveSpec spec = make_objective(m);
  spec.a[0] = 1e-8;
  spec.final_target[0].values.assign(s.context().nodes, 0.0);
  for (auto& a : spec.alpha) a = 1.0;
  spec.reference = make_controls(m, ControlSource::Initial);
  for (auto& sl : spec.reference.slots)
    for (auto& v : sl.values) v = 0.05 + 0.01 * v;
  ControlProblem p(m, s, spec, make_controls(m, ControlSource::Initial));
  const OptimizeResult r = optimize(p, p.flatten(p.controls(p.lower().cwiseMax(VecX::Zero(p.size())).cwiseMin(p.upper()))),
                                    config(Method::CgPR, 100, 1e-8));
  const VecX ref = project(p.flatten(spec.reference), p.lower(), p.upper());
  EXPECT_LE((r.x - ref).lpNorm<Eigen::Infinity>(), 1e-5) << r.message;
  EXPECT_GT(p.evaluations(), 0);
}
