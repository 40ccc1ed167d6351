// Serial forward step built from dense 9x9 matrices. Kept for testing the
// OpenMP kernels and as the baseline in the benchmark.
#include "chemolb/errors.hpp"
#include "chemolb/forward.hpp"

namespace chemolb {

void forward_step_reference(const SolverContext& c, const ControlVector& f, int n, const StepState& in,
                            StepState& out) {
  const int N = c.nodes;
  const int S = c.num_species;
  const Lattice& l = c.lattice;
  const double tau = l.tau;
  const std::size_t P = c.pop_size();

  std::vector<double> fields(static_cast<std::size_t>(c.num_fields) * N);
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < S; ++s) {
      double sum = 0.0;
      for (int q = 0; q < kQ; ++q) sum += in.pops[(static_cast<std::size_t>(s) * N + node) * kQ + q];
      fields[static_cast<std::size_t>(s) * N + node] = sum;
    }
    for (int o = 0; o < c.num_odes; ++o) {
      fields[static_cast<std::size_t>(S + o) * N + node] = in.ode[static_cast<std::size_t>(o) * N + node];
    }
  }

  std::vector<double> post(P), fnew(P);
  out.pops.assign(P, 0.0);
  out.ode.assign(c.ode_size(), 0.0);
  for (int node = 0; node < N; ++node) {
    std::array<double, kMaxFields> Y{};
    std::array<double, kMaxControls> fv{};
    for (int j = 0; j < c.num_fields; ++j) Y[j] = fields[static_cast<std::size_t>(j) * N + node];
    for (int p = 0; p < c.num_controls; ++p) fv[p] = f.at(p, n, node);
    NodePoint pt;
    pt.x = c.grid.x(node);
    pt.y = c.grid.y(node);
    pt.t = c.time(n);
    pt.level = n;
    pt.node = node;
    pt.fields = Y.data();
    pt.controls = fv.data();
    NodeCoeffs co;
    c.model->evaluate(pt, co, false);
    for (int s = 0; s < S; ++s) {
      const SpeciesCoeffs& sc = co.s[s];
      const Relaxation R = relaxation_from_diffusion(sc.D, tau, c.layout.d[s], l.cs2, c.layout.rates[s]);
      const Mat9 A = collision_matrix(R, c.transform);
      Vec9 phi;
      for (int q = 0; q < kQ; ++q) phi[q] = in.pops[(static_cast<std::size_t>(s) * N + node) * kQ + q];
      const Vec9 feq = equilibrium(Y[s], sc.T, sc.C, c.layout.d[s], l);
      const Vec9 coll = phi - A * (phi - feq);
      const Vec2 V = c.layout.has_flux[s] ? force_velocity(R.W, sc.Tp, c.kappa_x[s]) : Vec2::Zero();
      const Vec9 F = force_distribution(sc.Phi, V, l);
      std::array<Mat2, kMaxCross> Ak;
      std::array<Vec2, kMaxCross> gk;
      const int nk = static_cast<int>(c.cross_slot[s].size());
      for (int k = 0; k < nk; ++k) {
        Ak[k] = R.K * sc.Dk[k] / tau;
        const int field = c.layout.cross_partner[s][k];
        gk[k] = c.grad.at(fields.data() + static_cast<std::size_t>(field) * N, node);
      }
      const Vec9 Sd = cross_diffusion_distribution(Ak.data(), gk.data(), nk, l);
      for (int q = 0; q < kQ; ++q) {
        const std::size_t k = (static_cast<std::size_t>(s) * N + node) * kQ + q;
        post[k] = coll[q] + tau * Sd[q] + 1.5 * tau * F[q];
        fnew[k] = F[q];
      }
    }
    for (int o = 0; o < c.num_odes; ++o) {
      const std::size_t k = static_cast<std::size_t>(o) * N + node;
      out.ode[k] = in.ode[k] + tau * co.o[o].R;
    }
  }

  const std::vector<double>& fp = n == 0 ? fnew : in.fprev;
  for (int s = 0; s < S; ++s) {
    for (int node = 0; node < N; ++node) {
      for (int q = 0; q < kQ; ++q) {
        int src = node;
        if (c.kappa_x[s] == 1 && c.grid.nbr(node, q) >= 0) src = c.grid.nbr(node, q);
        post[(static_cast<std::size_t>(s) * N + node) * kQ + q] -=
            0.5 * tau * fp[(static_cast<std::size_t>(s) * N + src) * kQ + q];
      }
    }
  }

  // push streaming; links leaving the domain bounce back to the origin node
  for (int s = 0; s < S; ++s) {
    for (int node = 0; node < N; ++node) {
      for (int q = 0; q < kQ; ++q) {
        const double v = post[(static_cast<std::size_t>(s) * N + node) * kQ + q];
        const int dst = c.grid.nbr(node, q);
        if (dst >= 0) {
          out.pops[(static_cast<std::size_t>(s) * N + dst) * kQ + q] = v;
        } else {
          out.pops[(static_cast<std::size_t>(s) * N + node) * kQ + l.opposite[q]] = v;
        }
      }
    }
  }
  out.fprev = std::move(fnew);
  check_finite(c, out, n + 1);
}

}  // namespace chemolb
