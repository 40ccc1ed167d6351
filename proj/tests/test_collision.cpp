#include <gtest/gtest.h>

#include <random>

#include "chemolb/collision.hpp"
#include "chemolb/errors.hpp"

using namespace chemolb;

namespace {

std::mt19937_64 rng(11);
double U() { return std::uniform_real_distribution<double>(-1.0, 1.0)(rng); }
Vec9 random9() {
  Vec9 v;
  for (auto& x : v) x = U();
  return v;
}

}  // namespace

TEST(Equilibrium, RestStateIsWeights) {
  const Lattice l = build_lattice(1.0, 1.0);
  const Vec9 f = equilibrium(1.0, Vec2::Zero(), Mat2::Zero(), 1.0, l);
  for (int i = 0; i < kQ; ++i) EXPECT_NEAR(f[i], l.w[i], 1e-16);
}

TEST(Equilibrium, MomentIdentities) {
  for (int k = 0; k < 500; ++k) {
    const Lattice l = build_lattice(0.5 + std::fabs(U()), 0.2 + std::fabs(U()));
    const double th = U(), d = 1.0 + 0.5 * U();
    const Vec2 T(U() * l.c, U() * l.c);
    Mat2 C;
    C << U(), 0.3, 0.3, U();
    C *= l.cs2;
    const Vec9 f = equilibrium(th, T, C, d, l);
    double s0 = 0;
    Vec2 s1 = Vec2::Zero();
    Mat2 s2 = Mat2::Zero();
    for (int i = 0; i < kQ; ++i) {
      s0 += f[i];
      s1 += l.e(i) * f[i];
      s2 += l.e(i) * l.e(i).transpose() * f[i];
    }
    EXPECT_NEAR(s0, th, 1e-12);
    EXPECT_NEAR((s1 - T).norm(), 0.0, 1e-12 * l.c);
    EXPECT_NEAR((s2 - C - d * l.cs2 * th * Mat2::Identity()).norm(), 0.0, 1e-12 * l.cs2);
  }
}

TEST(Relaxation, IsotropicExample) {
  const Relaxation r = relaxation_from_diffusion(0.25 * Mat2::Identity(), 1.0, 1.0, 1.0 / 3.0);
  EXPECT_NEAR((r.K - 0.8 * Mat2::Identity()).norm(), 0.0, 1e-15);
}

TEST(Relaxation, AnisotropicRoundTrip) {
  Mat2 D;
  D << 0.1, 0.0, 0.0, 0.3;
  const Relaxation r = relaxation_from_diffusion(D, 1.0, 1.0, 1.0 / 3.0);
  EXPECT_EQ(r.K(0, 1), 0.0);
  EXPECT_EQ(r.K(1, 0), 0.0);
  EXPECT_NEAR((diffusion_from_relaxation(r.K, 1.0, 1.0, 1.0 / 3.0) - D).norm(), 0.0, 1e-12);
  Mat2 R;
  R << 0.2, 0.05, 0.05, 0.15;
  const Relaxation rr = relaxation_from_diffusion(R, 0.5, 1.3, 2.0);
  EXPECT_NEAR((diffusion_from_relaxation(rr.K, 0.5, 1.3, 2.0) - R).norm(), 0.0, 1e-12);
}

TEST(Relaxation, SmallDiffusionApproachesWindowEdge) {
  const Relaxation r = relaxation_from_diffusion(1e-9 * Mat2::Identity(), 1.0, 1.0, 1.0 / 3.0);
  EXPECT_LT(r.K(0, 0), 2.0);
  EXPECT_GT(r.K(0, 0), 1.99999);
  EXPECT_THROW(relaxation_from_diffusion(-0.5 * Mat2::Identity(), 1.0, 1.0, 1.0 / 3.0), StabilityError);
}

TEST(Relaxation, PiLayoutAndFastProducts) {
  Relaxation r = relaxation_from_diffusion((Mat2() << 0.2, 0.05, 0.05, 0.1).finished(), 1.0, 1.0, 1.0 / 3.0,
                                           {0.9, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6});
  const Mat9 P = r.Pi();
  EXPECT_EQ(P(0, 0), 0.9);
  EXPECT_EQ(P(4, 4), 1.3);
  EXPECT_EQ(P(8, 8), 1.6);
  EXPECT_EQ(P(3, 5), r.K(0, 1));
  EXPECT_EQ(P(5, 3), r.K(1, 0));
  EXPECT_EQ(P(3, 4), 0.0);
  const Vec9 x = random9();
  EXPECT_NEAR((apply_pi(r, x) - P * x).norm(), 0.0, 1e-14);
  EXPECT_NEAR((apply_pi_transpose(r, x) - P.transpose() * x).norm(), 0.0, 1e-14);
}

TEST(Sources, ForceDistributionMoments) {
  const Lattice l = build_lattice(1.0, 0.5);
  EXPECT_EQ(force_distribution(0.0, Vec2(0.3, 0.1), l).norm(), 0.0);
  const Vec9 f2 = force_distribution(2.0, Vec2::Zero(), l);
  for (int i = 0; i < kQ; ++i) EXPECT_DOUBLE_EQ(f2[i], 2.0 * l.w[i]);
  for (int k = 0; k < 100; ++k) {
    const double phi = U();
    const Vec2 V(U(), U());
    const Vec9 f = force_distribution(phi, V, l);
    Vec2 m1 = Vec2::Zero();
    for (int i = 0; i < kQ; ++i) m1 += l.e(i) * f[i];
    EXPECT_NEAR(f.sum(), phi, 1e-14);
    EXPECT_NEAR((m1 - V * phi).norm(), 0.0, 1e-13);
  }
}

TEST(Sources, ForceVelocity) {
  Mat2 W;
  W << 1.4, 0.1, 0.1, 0.9;
  const Vec2 Tp(0.3, -0.2);
  const Vec2 V0 = force_velocity(W, Tp, 0);
  EXPECT_NEAR((W * V0 - (W - 0.5 * Mat2::Identity()) * Tp).norm(), 0.0, 1e-15);
  EXPECT_NEAR((force_velocity(W, Tp, 1) - Tp).norm(), 0.0, 1e-15);
  EXPECT_THROW(force_velocity(0.5 * Mat2::Identity(), Tp, 1), ConfigError);
}

TEST(Sources, CrossDiffusionMoments) {
  const Lattice l = build_lattice(2.0, 0.5);
  const Mat2 A[2] = {(Mat2() << 0.3, 0.1, 0.0, 0.2).finished(), (Mat2() << -0.1, 0.0, 0.05, 0.4).finished()};
  const Vec2 g[2] = {Vec2(0.0, 0.0), Vec2(0.0, 0.0)};
  EXPECT_EQ(cross_diffusion_distribution(A, g, 2, l).norm(), 0.0);
  for (int k = 0; k < 100; ++k) {
    const Vec2 gr[2] = {Vec2(U(), U()), Vec2(U(), U())};
    const Vec9 s = cross_diffusion_distribution(A, gr, 2, l);
    Vec2 m1 = Vec2::Zero();
    for (int i = 0; i < kQ; ++i) m1 += l.e(i) * s[i];
    EXPECT_NEAR(s.sum(), 0.0, 1e-14);
    EXPECT_NEAR((m1 - A[0] * gr[0] - A[1] * gr[1]).norm(), 0.0, 1e-13);
  }
}

TEST(Collision, FixedPointAndFullRelaxation) {
  const Lattice l = build_lattice(1.0, 1.0);
  const MomentTransform t = build_transform(l);
  const Relaxation r = relaxation_from_diffusion(0.1 * Mat2::Identity(), 1.0, 1.0, l.cs2, {1, 0.7, 1.2, 1, 1, 1, 1});
  const Vec9 feq = equilibrium(0.8, Vec2(0.1, -0.05), Mat2::Zero(), 1.0, l);
  EXPECT_NEAR((collide_node(feq, feq, r, t) - feq).norm(), 0.0, 1e-15);
  Relaxation full;
  full.K = full.W = Mat2::Identity();
  const Vec9 phi = random9();
  EXPECT_NEAR((collide_node(phi, feq, full, t) - feq).norm(), 0.0, 1e-14);
}

TEST(Collision, MatchesDenseOracleAndConservesMass) {
  const Lattice l = build_lattice(0.5, 0.2);
  const MomentTransform t = build_transform(l);
  Mat2 D;
  D << 0.2, 0.04, 0.04, 0.12;
  const Relaxation r = relaxation_from_diffusion(D, l.tau, 1.0, l.cs2, {1.0, 1.1, 0.9, 1.2, 1.3, 0.8, 1.0});
  // independent dense form: M^{-1} (I - Pi) M phi + M^{-1} Pi M feq
  const Mat9 Mdense = t.E0.asDiagonal() * t.M0;
  const Mat9 Midense = Mdense.inverse();
  for (int k = 0; k < 20; ++k) {
    const Vec9 phi = random9();
    const Vec9 feq = equilibrium(phi.sum(), Vec2(0.1, 0.2), Mat2::Zero(), 1.0, l);
    const Vec9 expect = Midense * (Mdense * phi - r.Pi() * (Mdense * (phi - feq)));
    const Vec9 got = collide_node(phi, feq, r, t);
    EXPECT_NEAR((got - expect).norm(), 0.0, 1e-12 * expect.norm());
    EXPECT_NEAR(got.sum(), phi.sum(), 1e-13);
    EXPECT_NEAR((collision_matrix(r, t) - Midense * r.Pi() * Mdense).norm(), 0.0, 1e-10);
  }
}

TEST(AdjointEquilibrium, ZeroAndRestCases) {
  const Lattice l = build_lattice(1.0, 1.0);
  const MomentTransform t = build_transform(l);
  const Relaxation r = relaxation_from_diffusion(0.2 * Mat2::Identity(), 1.0, 1.0, l.cs2);
  const Vec9 w = equilibrium_weights(Vec2::Zero(), Mat2::Zero(), 1.0, l);
  for (int i = 0; i < kQ; ++i) EXPECT_NEAR(w[i], l.w[i], 1e-16);  // aleph_j = 1
  EXPECT_EQ(adjoint_equilibrium(Vec9::Zero(), w, r, t).norm(), 0.0);
}

TEST(AdjointEquilibrium, MatchesDenseOracle) {
  const Lattice l = build_lattice(1.0, 0.5);
  const MomentTransform t = build_transform(l);
  Mat2 D;
  D << 0.3, 0.05, 0.05, 0.2;
  const Relaxation r = relaxation_from_diffusion(D, l.tau, 1.0, l.cs2);
  const Vec2 Tp(0.4, -0.3);
  const Mat2 Cp = Tp * Tp.transpose();
  const Vec9 w = equilibrium_weights(Tp, Cp, 1.0, l);
  // weights are d(phi_eq)/d(theta) of the equilibrium with T = theta Tp, C = theta Cp
  const Vec9 fd = (equilibrium(1.0 + 1e-6, (1.0 + 1e-6) * Tp, (1.0 + 1e-6) * Cp, 1.0, l) -
                   equilibrium(1.0 - 1e-6, (1.0 - 1e-6) * Tp, (1.0 - 1e-6) * Cp, 1.0, l)) /
                  2e-6;
  EXPECT_NEAR((w - fd).norm(), 0.0, 1e-9);
  // O has identical rows (w_j aleph_j); psi_eq = (Lambda*)^{-1} O Lambda* psi
  Mat9 O;
  for (int i = 0; i < 9; ++i) O.row(i) = w.transpose();
  const Mat9 L = collision_matrix(r, t);
  const Mat9 Ls = L.transpose();
  for (int k = 0; k < 10; ++k) {
    const Vec9 psi = random9();
    const Vec9 expect = Ls.inverse() * O * Ls * psi;
    EXPECT_NEAR((adjoint_equilibrium(psi, w, r, t) - expect).norm(), 0.0, 1e-10 * (1.0 + expect.norm()));
    EXPECT_NEAR((apply_adjoint_collision(r, t, psi) - Ls * psi).norm(), 0.0, 1e-12);
  }
}
