#include "chemolb/collision.hpp"

#include <cmath>
#include <complex>
#include <fmt/format.h>

#include "chemolb/errors.hpp"

namespace chemolb {

Mat9 Relaxation::Pi() const {
  Mat9 P = Mat9::Zero();
  P(0, 0) = s[0];
  P(1, 1) = s[1];
  P(2, 2) = s[2];
  P(3, 3) = K(0, 0);
  P(3, 5) = K(0, 1);
  P(5, 3) = K(1, 0);
  P(5, 5) = K(1, 1);
  P(4, 4) = s[3];
  P(6, 6) = s[4];
  P(7, 7) = s[5];
  P(8, 8) = s[6];
  return P;
}

Relaxation relaxation_from_diffusion(const Mat2& D, double tau, double d, double cs2,
                                     const std::array<double, 7>& rates) {
  const double scale = d * cs2 * tau;
  Relaxation r;
  r.s = rates;
  r.W = D / scale + 0.5 * Mat2::Identity();
  const double det = r.W.determinant();
  if (!(std::fabs(det) > 0.0) || !std::isfinite(det)) {
    throw StabilityError(fmt::format("relaxation: D/(d cs2 tau) + I/2 is singular (diffusion scale {:.4g})", scale));
  }
  r.K = r.W.inverse();
  // eigenvalues of a 2x2 matrix
  const double tr = r.K.trace();
  const double dk = r.K.determinant();
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr / 4.0 - dk));
  for (const auto ev : {tr / 2.0 + disc, tr / 2.0 - disc}) {
    if (!(ev.real() > 0.0 && ev.real() < 2.0)) {
      throw StabilityError(fmt::format(
          "relaxation: K eigenvalue {:.4g} outside (0, 2); diffusion tensor [[{:.4g}, {:.4g}], [{:.4g}, {:.4g}]] "
          "against scale d cs2 tau = {:.4g}",
          ev.real(), D(0, 0), D(0, 1), D(1, 0), D(1, 1), scale));
    }
  }
  return r;
}

Mat2 diffusion_from_relaxation(const Mat2& K, double tau, double d, double cs2) {
  return d * cs2 * tau * (K.inverse() - 0.5 * Mat2::Identity());
}

Vec9 apply_pi(const Relaxation& r, const Vec9& x) {
  Vec9 y;
  y[0] = r.s[0] * x[0];
  y[1] = r.s[1] * x[1];
  y[2] = r.s[2] * x[2];
  y[3] = r.K(0, 0) * x[3] + r.K(0, 1) * x[5];
  y[5] = r.K(1, 0) * x[3] + r.K(1, 1) * x[5];
  y[4] = r.s[3] * x[4];
  y[6] = r.s[4] * x[6];
  y[7] = r.s[5] * x[7];
  y[8] = r.s[6] * x[8];
  return y;
}

Vec9 apply_pi_transpose(const Relaxation& r, const Vec9& x) {
  Vec9 y;
  y[0] = r.s[0] * x[0];
  y[1] = r.s[1] * x[1];
  y[2] = r.s[2] * x[2];
  y[3] = r.K(0, 0) * x[3] + r.K(1, 0) * x[5];
  y[5] = r.K(0, 1) * x[3] + r.K(1, 1) * x[5];
  y[4] = r.s[3] * x[4];
  y[6] = r.s[4] * x[6];
  y[7] = r.s[5] * x[7];
  y[8] = r.s[6] * x[8];
  return y;
}

Vec9 equilibrium(double theta, const Vec2& T, const Mat2& C, double d, const Lattice& l) {
  const double cs2 = l.cs2;
  const Mat2 Q = C + (d - 1.0) * cs2 * theta * Mat2::Identity();
  Vec9 f;
  for (int i = 0; i < kQ; ++i) {
    const Vec2 e = l.e(i);
    // Q : (e e^T - cs2 I)
    const double qe = e.dot(Q * e) - cs2 * Q.trace();
    f[i] = l.w[i] * (theta + T.dot(e) / cs2 + qe / (2.0 * cs2 * cs2));
  }
  return f;
}

Vec9 equilibrium_weights(const Vec2& Tp, const Mat2& Cp, double d, const Lattice& l) {
  const double cs2 = l.cs2;
  const Mat2 Q = Cp + (d - 1.0) * cs2 * Mat2::Identity();
  Vec9 w;
  for (int i = 0; i < kQ; ++i) {
    const Vec2 e = l.e(i);
    const double qe = e.dot(Q * e) - cs2 * Q.trace();
    w[i] = l.w[i] * (1.0 + Tp.dot(e) / cs2 + qe / (2.0 * cs2 * cs2));
  }
  return w;
}

Vec2 force_velocity(const Mat2& W, const Vec2& Tp, int kappa_x) {
  if (Tp[0] == 0.0 && Tp[1] == 0.0) return Vec2::Zero();
  const Mat2 P = W - 0.5 * kappa_x * Mat2::Identity();
  const double det = P.determinant();
  if (std::fabs(det) < 1e-12 * std::max(1.0, W.norm() * W.norm())) {
    throw ConfigError("time", "kappa_x", "K^{-1} - (kappa_x/2) I is singular; choose kappa_x = 0");
  }
  return P.inverse() * ((W - 0.5 * Mat2::Identity()) * Tp);
}

Vec9 force_distribution(double Phi, const Vec2& V, const Lattice& l) {
  Vec9 F;
  for (int i = 0; i < kQ; ++i) F[i] = l.w[i] * Phi * (1.0 + V.dot(l.e(i)) / l.cs2);
  return F;
}

Vec9 cross_diffusion_distribution(const Vec2& G, const Lattice& l) {
  Vec9 S;
  for (int i = 0; i < kQ; ++i) S[i] = l.w[i] / l.cs2 * l.e(i).dot(G);
  return S;
}

Vec9 cross_diffusion_distribution(const Mat2* A, const Vec2* grads, int count, const Lattice& l) {
  Vec2 G = Vec2::Zero();
  for (int k = 0; k < count; ++k) G += A[k] * grads[k];
  return cross_diffusion_distribution(G, l);
}

Vec9 collide_node(const Vec9& phi, const Vec9& feq, const Relaxation& r, const MomentTransform& t) {
  // E0 commutes with Pi, so the integer matrix M0 gives the same operator.
  const Vec9 dm = t.M0 * (phi - feq);
  return phi - t.M0inv * apply_pi(r, dm);
}

Mat9 collision_matrix(const Relaxation& r, const MomentTransform& t) { return t.Minv * r.Pi() * t.M; }

Vec9 apply_adjoint_collision(const Relaxation& r, const MomentTransform& t, const Vec9& psi) {
  return t.M0.transpose() * apply_pi_transpose(r, t.M0inv.transpose() * psi);
}

Vec9 adjoint_equilibrium(const Vec9& psi, const Vec9& weights, const Relaxation& r, const MomentTransform& t) {
  const Vec9 lam = apply_adjoint_collision(r, t, psi);
  const double T = weights.dot(lam);
  const Mat9 Lstar = collision_matrix(r, t).transpose();
  return Lstar.fullPivLu().solve(Vec9::Constant(T));
}

}  // namespace chemolb
