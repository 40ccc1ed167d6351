#pragma once

#include <array>

#include "chemolb/lattice.hpp"

namespace chemolb {

// Momentum-block relaxation K and the remaining moment rates s0..s6.
struct Relaxation {
  Mat2 K = Mat2::Identity();
  Mat2 W = Mat2::Identity();  // K^{-1}
  std::array<double, 7> s{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  // Dense 9x9 relaxation matrix in moment space.
  Mat9 Pi() const;
};

// K = (D / (d cs2 tau) + I/2)^{-1}; throws StabilityError when an eigenvalue
// of K leaves the window (0, 2).
Relaxation relaxation_from_diffusion(const Mat2& D, double tau, double d, double cs2,
                                     const std::array<double, 7>& rates = {1, 1, 1, 1, 1, 1, 1});
Mat2 diffusion_from_relaxation(const Mat2& K, double tau, double d, double cs2);

// y = Pi x and y = Pi^T x without forming the matrix.
Vec9 apply_pi(const Relaxation& r, const Vec9& x);
Vec9 apply_pi_transpose(const Relaxation& r, const Vec9& x);

Vec9 equilibrium(double theta, const Vec2& T, const Mat2& C, double d, const Lattice& l);
// d(phi_eq_j)/d(theta) = w_j aleph_j for flux Jacobian Tp and dC/dtheta Cp.
Vec9 equilibrium_weights(const Vec2& Tp, const Mat2& Cp, double d, const Lattice& l);

// V = (W - kappa/2 I)^{-1} (W - I/2) Tp, with W = K^{-1}.
Vec2 force_velocity(const Mat2& W, const Vec2& Tp, int kappa_x);
Vec9 force_distribution(double Phi, const Vec2& V, const Lattice& l);
// G = sum_k A_k grad h_k, already combined.
Vec9 cross_diffusion_distribution(const Vec2& G, const Lattice& l);
Vec9 cross_diffusion_distribution(const Mat2* A, const Vec2* grads, int count, const Lattice& l);

// Post-collision populations M^{-1}(m - Pi (m - m_eq)), without sources.
Vec9 collide_node(const Vec9& phi, const Vec9& feq, const Relaxation& r, const MomentTransform& t);
// Dense M^{-1} Pi M.
Mat9 collision_matrix(const Relaxation& r, const MomentTransform& t);

// Adjoint collision matrix Lambda* = (M^{-1} Pi M)^T applied to psi.
Vec9 apply_adjoint_collision(const Relaxation& r, const MomentTransform& t, const Vec9& psi);
// psi_eq = (Lambda*)^{-1} (T 1) with T = sum_j w_j aleph_j (Lambda* psi)_j.
Vec9 adjoint_equilibrium(const Vec9& psi, const Vec9& weights, const Relaxation& r, const MomentTransform& t);

}  // namespace chemolb
