#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chemolb/errors.hpp"
#include "chemolb/lattice.hpp"

using namespace chemolb;

TEST(Lattice, WeightsAtUnitSpacing) {
  const Lattice l = build_lattice(1.0, 1.0);
  EXPECT_DOUBLE_EQ(l.w[0], 4.0 / 9.0);
  for (int i = 1; i <= 4; ++i) EXPECT_DOUBLE_EQ(l.w[i], 1.0 / 9.0);
  for (int i = 5; i <= 8; ++i) EXPECT_DOUBLE_EQ(l.w[i], 1.0 / 36.0);
  EXPECT_DOUBLE_EQ(l.c, 1.0);
  EXPECT_DOUBLE_EQ(l.cs2, 1.0 / 3.0);
}

TEST(Lattice, SecondMomentOfWeights) {
  const Lattice l = build_lattice(1.0, 1.0);
  Mat2 s = Mat2::Zero();
  for (int i = 0; i < kQ; ++i) s += l.w[i] * l.e(i) * l.e(i).transpose();
  EXPECT_NEAR((s - Mat2::Identity() / 3.0).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Lattice, InvariantsForArbitrarySpacing) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> U(0.1, 3.0);
  for (int k = 0; k < 20; ++k) {
    const Lattice l = build_lattice(U(rng), U(rng));
    double sw = 0.0;
    Vec2 swe = Vec2::Zero();
    Mat2 swo = Mat2::Zero();
    for (int i = 0; i < kQ; ++i) {
      sw += l.w[i];
      swe += l.w[i] * l.e(i);
      swo += l.w[i] * (l.e(i) * l.e(i).transpose() - l.cs2 * Mat2::Identity());
      EXPECT_GT(l.w[i], 0.0);
      EXPECT_EQ(l.ex[l.opposite[i]], -l.ex[i]);
      EXPECT_EQ(l.ey[l.opposite[i]], -l.ey[i]);
    }
    EXPECT_NEAR(sw, 1.0, 1e-15);
    EXPECT_NEAR(swe.norm(), 0.0, 1e-14 * l.c);
    EXPECT_NEAR(swo.cwiseAbs().maxCoeff(), 0.0, 1e-14 * l.cs2);
  }
}

TEST(Lattice, RejectsNonPositiveSpacing) {
  EXPECT_THROW(build_lattice(0.0, 1.0), ParameterError);
  EXPECT_THROW(build_lattice(1.0, -1.0), ParameterError);
}

TEST(Transform, PrintedRowsAndScaling) {
  const Lattice l = build_lattice(0.5, 0.25);
  const MomentTransform t = build_transform(l);
  const double row1[9] = {-4, -1, -1, -1, -1, 2, 2, 2, 2};
  for (int j = 0; j < 9; ++j) EXPECT_EQ(t.M0(1, j), row1[j]);
  for (int j = 0; j < 9; ++j) {
    EXPECT_EQ(t.M0(0, j), 1.0);
    EXPECT_EQ(t.M0(3, j), l.ex[j]);
    EXPECT_EQ(t.M0(5, j), l.ey[j]);
  }
  const double c = l.c;
  const double e0[9] = {1, c * c, c * c * c * c, c, c * c * c, c, c * c * c, c * c, c * c};
  for (int i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(t.E0[i], e0[i]);
  EXPECT_LT((t.M * t.Minv - Mat9::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Transform, MomentsOfWeightsAndUnitVector) {
  const Lattice l = build_lattice(1.0, 0.5);
  const MomentTransform t = build_transform(l);
  Vec9 w;
  for (int i = 0; i < 9; ++i) w[i] = l.w[i];
  EXPECT_NEAR(moments(t, w)[0], 1.0, 1e-15);
  Vec9 e = Vec9::Zero();
  e[0] = 1.0;
  EXPECT_EQ(moments(t, e), t.M.col(0));
}

TEST(Transform, RoundTrip) {
  const MomentTransform t = build_transform(build_lattice(0.3, 0.7));
  std::mt19937 rng(5);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 50; ++k) {
    Vec9 f;
    for (auto& v : f) v = nd(rng);
    EXPECT_LT((inverse_moments(t, moments(t, f)) - f).norm(), 1e-12 * f.norm());
  }
}

namespace {

struct GradFixture {
  Lattice l;
  Grid g;
  GradientOperator op;
  explicit GradFixture(int n, double h) : l(build_lattice(h, 1.0)), g(n, n, h, l), op(g, l) {}
  std::vector<double> sample(double (*f)(double, double)) const {
    std::vector<double> v(g.nodes());
    for (int i = 0; i < g.nodes(); ++i) v[i] = f(g.x(i), g.y(i));
    return v;
  }
};

}  // namespace

TEST(Gradient, ConstantAndAffineFields) {
  GradFixture fx(9, 0.25);
  const auto c = fx.sample([](double, double) { return 3.0; });
  const auto a = fx.sample([](double x, double y) { return 2.0 * x - 0.5 * y + 1.0; });
  for (int node = 0; node < fx.g.nodes(); ++node) {
    EXPECT_NEAR(fx.op.at(c.data(), node).norm(), 0.0, 1e-12);
    const Vec2 ga = fx.op.at(a.data(), node);
    EXPECT_NEAR(ga[0], 2.0, 1e-12);
    EXPECT_NEAR(ga[1], -0.5, 1e-12);
  }
}

TEST(Gradient, QuadraticInterior) {
  GradFixture fx(21, 0.1);
  const auto q = fx.sample([](double x, double) { return x * x; });
  const int node = fx.g.index(10, 10);
  EXPECT_NEAR(fx.op.at(q.data(), node)[0], 2.0 * fx.g.x(node), 1e-10);
}

TEST(Gradient, SecondOrderConvergence) {
  auto err = [](int n) {
    GradFixture fx(n, 1.0 / n);
    const auto v = fx.sample([](double x, double y) { return std::sin(3.0 * x) * std::cos(2.0 * y); });
    std::vector<double> out(2 * fx.g.nodes());
    fx.op.apply(v.data(), out.data());
    double e = 0.0;
    for (int i = 0; i < fx.g.nodes(); ++i) {
      const double x = fx.g.x(i), y = fx.g.y(i);
      e = std::max(e, std::fabs(out[2 * i] - 3.0 * std::cos(3.0 * x) * std::cos(2.0 * y)));
      e = std::max(e, std::fabs(out[2 * i + 1] + 2.0 * std::sin(3.0 * x) * std::sin(2.0 * y)));
    }
    return e;
  };
  const double rate = std::log2(err(32) / err(64));
  EXPECT_GE(rate, 1.9);
}

TEST(Gradient, TransposeIsAdjoint) {
  GradFixture fx(7, 0.5);
  std::mt19937 rng(9);
  std::normal_distribution<double> nd;
  std::vector<double> u(fx.g.nodes()), w(2 * fx.g.nodes()), gu(2 * fx.g.nodes()), gtw(fx.g.nodes());
  for (auto& v : u) v = nd(rng);
  for (auto& v : w) v = nd(rng);
  fx.op.apply(u.data(), gu.data());
  fx.op.apply_transpose(w.data(), gtw.data());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) lhs += w[i] * gu[i];
  for (std::size_t i = 0; i < u.size(); ++i) rhs += u[i] * gtw[i];
  EXPECT_NEAR(lhs, rhs, 1e-12 * std::fabs(lhs));
}

TEST(Grid, BoundaryLinksHaveNoNeighbor) {
  const Lattice l = build_lattice(1.0, 1.0);
  const Grid g(4, 3, 1.0, l);
  EXPECT_EQ(g.nbr(g.index(0, 0), 3), -1);
  EXPECT_EQ(g.nbr(g.index(0, 0), 7), -1);
  EXPECT_EQ(g.nbr(g.index(0, 0), 1), g.index(1, 0));
  EXPECT_EQ(g.nbr(g.index(3, 2), 5), -1);
  EXPECT_DOUBLE_EQ(g.x(g.index(1, 0)), 1.5);
}
