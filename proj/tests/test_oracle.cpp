#include <gtest/gtest.h>

#include <cmath>

#include "chemolb/errors.hpp"
#include "chemolb/io.hpp"
#include "chemolb/oracle.hpp"

using namespace chemolb;

namespace {

ProblemModel scalar_model(int n, double dt, int steps, const std::string& initial) {
  ConfigDocument doc;
  doc.set("domain", "nx", std::to_string(n));
  doc.set("domain", "ny", std::to_string(n));
  doc.set("domain", "h", format_double(1.0 / n));
  doc.set("time", "dt", format_double(dt));
  doc.set("time", "steps", std::to_string(steps));
  doc.set("species.u", "diffusion", "0.05");
  doc.set("species.u", "initial", initial);
  return load_model(doc);
}

}  // namespace

TEST(FiniteDifference, HeatKernel) {
  const int n = 128;
  const double sigma = 0.05, t0 = 0.01, h = 1.0 / n, dt = h * h / (6.0 * sigma);
  const int steps = 192;
  const ProblemModel m = scalar_model(n, dt, steps, "exp(-((x - 0.5)^2 + (y - 0.5)^2)/0.002)");
  const auto r = oracle::run_fd(m, make_controls(m, ControlSource::Initial));
  ASSERT_EQ(static_cast<int>(r.fields.size()), steps + 1);
  const double t = t0 + steps * dt;
  const Grid g(n, n, h, build_lattice(h, dt));
  std::vector<double> exact(r.fields.back().size());
  for (int i = 0; i < g.nodes(); ++i) {
    const double dx = g.x(i) - 0.5, dy = g.y(i) - 0.5;
    exact[i] = t0 / t * std::exp(-(dx * dx + dy * dy) / (4.0 * sigma * t));
  }
  EXPECT_LE(oracle::relative_l2(r.fields.back(), exact), 5e-3);
}

TEST(FiniteDifference, ZeroDataAndMass) {
  const ProblemModel z = scalar_model(16, 1e-3, 40, "0");
  for (double v : oracle::run_fd(z, make_controls(z, ControlSource::Initial)).fields.back()) EXPECT_EQ(v, 0.0);
  ConfigDocument doc = builtin_config("crime");
  doc.set("domain", "nx", "16");
  doc.set("domain", "ny", "16");
  doc.set("time", "steps", "30");
  const ProblemModel m = load_model(doc).without_sources();
  const auto r = oracle::run_fd(m, make_controls(m, ControlSource::Initial));
  const int N = 256;
  for (int j = 0; j < 2; ++j) {
    double m0 = 0, m1 = 0;
    for (int i = 0; i < N; ++i) {
      m0 += r.fields.front()[j * N + i];
      m1 += r.fields.back()[j * N + i];
    }
    EXPECT_NEAR(m1, m0, 1e-10 * std::fabs(m0));
  }
}

TEST(GradientCheck, ExactOnQuadratic) {
  Eigen::MatrixXd A(3, 3);
  A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
  const Eigen::VectorXd b = Eigen::Vector3d(1, -2, 0.5);
  auto J = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(A * x) - b.dot(x); };
  const Eigen::VectorXd x = Eigen::Vector3d(0.3, -0.7, 1.1);
  const std::vector<Eigen::VectorXd> dirs = {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0.2, -1, 0.5)};
  const auto rep = oracle::fd_gradient_check(J, x, A * x - b, dirs, 1e-4);
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.max_rel_error, 1e-10);
  EXPECT_NE(rep.table().find("rel_err"), std::string::npos);
}

TEST(GradientCheck, DetectsSignError) {
  auto J = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
  const Eigen::VectorXd x = Eigen::Vector2d(1.0, 2.0);
  const auto rep = oracle::fd_gradient_check(J, x, -2.0 * x, {Eigen::Vector2d(1, 1)}, 1e-5);
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.rows[0].rel_error, 2.0, 1e-8);
}

TEST(GradientCheck, EpsilonRange) {
  auto J = [](const Eigen::VectorXd& x) { return x.sum(); };
  const Eigen::VectorXd x = Eigen::Vector2d(1.0, 2.0);
  EXPECT_THROW(oracle::fd_gradient_check(J, x, x, {x}, 1e-2), ParameterError);
  EXPECT_THROW(oracle::fd_gradient_check(J, x, x, {x}, 1e-9), ParameterError);
}

TEST(RelativeL2, Basics) {
  EXPECT_EQ(oracle::relative_l2({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_NEAR(oracle::relative_l2({2, 0}, {1, 0}), 1.0, 1e-15);
}
