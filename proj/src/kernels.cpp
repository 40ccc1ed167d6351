#include <cmath>
#include <exception>
#include <mutex>

#include "chemolb/errors.hpp"
#include "chemolb/forward.hpp"

namespace chemolb {

StepState SolverContext::zero_state() const {
  StepState s;
  s.pops.assign(pop_size(), 0.0);
  s.ode.assign(ode_size(), 0.0);
  s.fprev.assign(pop_size(), 0.0);
  return s;
}

void Workspace::ensure(const SolverContext& c) {
  const std::size_t N = static_cast<std::size_t>(c.nodes);
  const std::size_t ng = c.grad_fields.size();
  fields.resize(c.num_fields * N);
  grads.resize(ng * 2 * N);
  post.resize(c.pop_size());
  fnew.resize(c.pop_size());
  dfields.resize(c.num_fields * N);
  dgrads.resize(ng * 2 * N);
  psistar.resize(c.pop_size());
  ybar.resize(c.num_fields * N);
  gbar.resize(ng * 2 * N);
  fbar_node.resize(c.num_controls * N);
}

namespace {

// Keeps the exception raised at the lowest node so parallel runs report
// the same failure as serial ones.
class FirstError {
 public:
  void capture(int node) {
    std::lock_guard<std::mutex> lock(mu_);
    if (!err_ || node < node_) {
      err_ = std::current_exception();
      node_ = node;
    }
  }
  void rethrow() const {
    if (err_) std::rethrow_exception(err_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr err_;
  int node_ = 0;
};

inline std::size_t pidx(const SolverContext& c, int s, int node) {
  return (static_cast<std::size_t>(s) * c.nodes + node) * kQ;
}

inline Vec9 load9(const double* p) {
  Vec9 v;
  for (int q = 0; q < kQ; ++q) v[q] = p[q];
  return v;
}

inline void store9(double* p, const Vec9& v) {
  for (int q = 0; q < kQ; ++q) p[q] = v[q];
}

struct NodeInput {
  std::array<double, kMaxFields> Y{};
  std::array<double, kMaxControls> f{};
  NodePoint pt;
};

inline void gather(const SolverContext& c, const double* fields, const ControlVector& f, int n, int node,
                   NodeInput& in) {
  for (int j = 0; j < c.num_fields; ++j) in.Y[j] = fields[static_cast<std::size_t>(j) * c.nodes + node];
  for (int p = 0; p < c.num_controls; ++p) in.f[p] = f.at(p, n, node);
  in.pt.x = c.grid.x(node);
  in.pt.y = c.grid.y(node);
  in.pt.t = c.time(n);
  in.pt.level = n;
  in.pt.node = node;
  in.pt.fields = in.Y.data();
  in.pt.controls = in.f.data();
}

inline Vec2 grad_at(const SolverContext& c, const double* grads, int slot, int node) {
  const double* g = grads + static_cast<std::size_t>(slot) * 2 * c.nodes + 2 * static_cast<std::size_t>(node);
  return Vec2(g[0], g[1]);
}

void compute_gradients(const SolverContext& c, const double* fields, double* grads) {
  for (std::size_t g = 0; g < c.grad_fields.size(); ++g) {
    c.grad.apply(fields + static_cast<std::size_t>(c.grad_fields[g]) * c.nodes, grads + g * 2 * c.nodes);
  }
}

// Per-node, per-species quantities shared by the three kernels.
struct SpeciesLocal {
  Relaxation R;
  Vec9 phi, feq, dm;
  Vec2 V = Vec2::Zero();
  Mat2 Pinv = Mat2::Identity();
  Mat2 Q = Mat2::Zero();
  Vec9 F;
  Vec2 G = Vec2::Zero();
  std::array<Vec2, kMaxCross> DkG;  // D_k g_k
};

void species_local(const SolverContext& c, int s, const SpeciesCoeffs& co, const double* phi, double theta,
                   const double* grads, int node, SpeciesLocal& L) {
  const Lattice& l = c.lattice;
  const double tau = l.tau;
  const double d = c.layout.d[s];
  L.R = relaxation_from_diffusion(co.D, tau, d, l.cs2, c.layout.rates[s]);
  L.phi = load9(phi);
  L.feq = equilibrium(theta, co.T, co.C, d, l);
  L.dm = c.transform.M0 * (L.phi - L.feq);
  if (c.layout.has_flux[s]) {
    const Mat2 P = L.R.W - 0.5 * c.kappa_x[s] * Mat2::Identity();
    L.Pinv = P.inverse();
    L.Q = L.R.W - 0.5 * Mat2::Identity();
    L.V = L.Pinv * (L.Q * co.Tp);
  } else {
    L.V.setZero();
  }
  L.F = force_distribution(co.Phi, L.V, l);
  L.G.setZero();
  const auto& slots = c.cross_slot[s];
  for (std::size_t k = 0; k < slots.size(); ++k) {
    L.DkG[k] = co.Dk[k] * grad_at(c, grads, slots[k], node);
    L.G += L.DkG[k];
  }
  L.G = L.R.K * L.G / tau;
}

// -tau/2 F_prev(x + kappa e_i) characteristic term, then streaming.
void finish_step(const SolverContext& c, const double* fprev_src, double* post, double* out_pops) {
  const double half = 0.5 * c.lattice.tau;
  const int N = c.nodes;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      double* p = post + pidx(c, s, node);
      for (int q = 0; q < kQ; ++q) {
        int src = node;
        if (c.kappa_x[s] == 1) {
          const int nb = c.grid.nbr(node, q);
          if (nb >= 0) src = nb;
        }
        p[q] -= half * fprev_src[pidx(c, s, src) + q];
      }
    }
  }
  stream_and_bounce(c, post, out_pops);
}

}  // namespace

void recover_macroscopic(const SolverContext& c, const StepState& st, double* fields) {
  const int N = c.nodes;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      const double* p = st.pops.data() + pidx(c, s, node);
      double sum = 0.0;
      for (int q = 0; q < kQ; ++q) sum += p[q];
      fields[static_cast<std::size_t>(s) * N + node] = sum;
    }
    for (int o = 0; o < c.num_odes; ++o) {
      fields[static_cast<std::size_t>(c.num_species + o) * N + node] = st.ode[static_cast<std::size_t>(o) * N + node];
    }
  }
}

void stream_and_bounce(const SolverContext& c, const double* post, double* out) {
  const int N = c.nodes;
  const auto& opp = c.lattice.opposite;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      double* o = out + pidx(c, s, node);
      for (int q = 0; q < kQ; ++q) {
        const int src = c.grid.nbr(node, opp[q]);
        o[q] = src >= 0 ? post[pidx(c, s, src) + q] : post[pidx(c, s, node) + opp[q]];
      }
    }
  }
}

void stream_and_bounce_transpose(const SolverContext& c, const double* in, double* post_bar) {
  const int N = c.nodes;
  const auto& opp = c.lattice.opposite;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      double* o = post_bar + pidx(c, s, node);
      for (int q = 0; q < kQ; ++q) {
        const int dst = c.grid.nbr(node, q);
        o[q] = dst >= 0 ? in[pidx(c, s, dst) + q] : in[pidx(c, s, node) + opp[q]];
      }
    }
  }
}

void check_finite(const SolverContext& c, const StepState& st, int step) {
  const int N = c.nodes;
  for (int s = 0; s < c.num_species; ++s) {
    bool bad = false;
    const double* p = st.pops.data() + pidx(c, s, 0);
#pragma omp parallel for schedule(static) reduction(|| : bad)
    for (int i = 0; i < N * kQ; ++i) bad = bad || !std::isfinite(p[i]);
    if (bad) {
      throw DivergenceError(step, c.species_names[s],
                            "non-finite population of species '" + c.species_names[s] + "' at step " +
                                std::to_string(step));
    }
  }
  for (int o = 0; o < c.num_odes; ++o) {
    const double* p = st.ode.data() + static_cast<std::size_t>(o) * N;
    for (int i = 0; i < N; ++i) {
      if (!std::isfinite(p[i])) {
        const std::string& name = c.layout.field_names[c.num_species + o];
        throw DivergenceError(step, name, "non-finite value of field '" + name + "' at step " + std::to_string(step));
      }
    }
  }
}

void forward_step(const SolverContext& c, const ControlVector& f, int n, const StepState& in, StepState& out,
                  Workspace& ws) {
  ws.ensure(c);
  const int N = c.nodes;
  const double tau = c.lattice.tau;
  out.pops.resize(c.pop_size());
  out.ode.resize(c.ode_size());
  recover_macroscopic(c, in, ws.fields.data());
  compute_gradients(c, ws.fields.data(), ws.grads.data());
  FirstError err;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    try {
      NodeInput ni;
      gather(c, ws.fields.data(), f, n, node, ni);
      NodeCoeffs co;
      c.model->evaluate(ni.pt, co, false);
      SpeciesLocal L;
      for (int s = 0; s < c.num_species; ++s) {
        species_local(c, s, co.s[s], in.pops.data() + pidx(c, s, node), ni.Y[s], ws.grads.data(), node, L);
        const Vec9 coll = L.phi - c.transform.M0inv * apply_pi(L.R, L.dm);
        const Vec9 S = cross_diffusion_distribution(L.G, c.lattice);
        store9(ws.post.data() + pidx(c, s, node), coll + tau * S + 1.5 * tau * L.F);
        store9(ws.fnew.data() + pidx(c, s, node), L.F);
      }
      for (int o = 0; o < c.num_odes; ++o) {
        const std::size_t k = static_cast<std::size_t>(o) * N + node;
        out.ode[k] = in.ode[k] + tau * co.o[o].R;
      }
    } catch (...) {
      err.capture(node);
    }
  }
  err.rethrow();
  finish_step(c, n == 0 ? ws.fnew.data() : in.fprev.data(), ws.post.data(), out.pops.data());
  out.fprev.swap(ws.fnew);
  ws.fnew.resize(c.pop_size());
}

void tangent_step(const SolverContext& c, const ControlVector& f, const ControlVector& df, int n,
                  const StepState& base, const StepState& din, StepState& dout, Workspace& ws) {
  ws.ensure(c);
  const int N = c.nodes;
  const Lattice& l = c.lattice;
  const double tau = l.tau;
  dout.pops.resize(c.pop_size());
  dout.ode.resize(c.ode_size());
  recover_macroscopic(c, base, ws.fields.data());
  compute_gradients(c, ws.fields.data(), ws.grads.data());
  recover_macroscopic(c, din, ws.dfields.data());
  compute_gradients(c, ws.dfields.data(), ws.dgrads.data());
  FirstError err;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    try {
      NodeInput ni;
      gather(c, ws.fields.data(), f, n, node, ni);
      std::array<double, kMaxFields> dY{};
      std::array<double, kMaxControls> dfv{};
      for (int j = 0; j < c.num_fields; ++j) dY[j] = ws.dfields[static_cast<std::size_t>(j) * N + node];
      for (int p = 0; p < c.num_controls; ++p) dfv[p] = df.at(p, n, node);
      NodeCoeffs co;
      c.model->evaluate(ni.pt, co, true);
      SpeciesLocal L;
      for (int s = 0; s < c.num_species; ++s) {
        const SpeciesCoeffs& sc = co.s[s];
        species_local(c, s, sc, base.pops.data() + pidx(c, s, node), ni.Y[s], ws.grads.data(), node, L);
        const double scale = c.layout.d[s] * l.cs2 * tau;
        Mat2 dW = Mat2::Zero();
        if (c.layout.state_dependent_diffusion[s]) {
          for (int j = 0; j < c.num_fields; ++j) dW += sc.dD[j] * dY[j];
          dW /= scale;
        }
        const Mat2 dK = -L.R.K * dW * L.R.K;
        const double dtheta = dY[s];
        const Vec9 wa = equilibrium_weights(sc.Tp, sc.Cp, c.layout.d[s], l);
        const Vec9 dphi = load9(din.pops.data() + pidx(c, s, node));
        const Vec9 ddm = c.transform.M0 * (dphi - wa * dtheta);
        Vec9 dr = apply_pi(L.R, ddm);
        dr[3] += dK(0, 0) * L.dm[3] + dK(0, 1) * L.dm[5];
        dr[5] += dK(1, 0) * L.dm[3] + dK(1, 1) * L.dm[5];
        const Vec9 dcoll = dphi - c.transform.M0inv * dr;

        double dPhi = 0.0;
        for (int j = 0; j < c.num_fields; ++j) dPhi += sc.dPhi[j] * dY[j];
        for (int p = 0; p < c.num_controls; ++p) dPhi += sc.dPhi_df[p] * dfv[p];
        Vec2 dV = Vec2::Zero();
        if (c.layout.has_flux[s]) dV = L.Pinv * (dW * (sc.Tp - L.V) + L.Q * sc.Tpp * dtheta);
        Vec9 dF;
        for (int i = 0; i < kQ; ++i) {
          const Vec2 e = l.e(i);
          dF[i] = l.w[i] * (dPhi * (1.0 + L.V.dot(e) / l.cs2) + sc.Phi * dV.dot(e) / l.cs2);
        }

        Vec2 dG = Vec2::Zero();
        const auto& slots = c.cross_slot[s];
        for (std::size_t k = 0; k < slots.size(); ++k) {
          Mat2 dDk = Mat2::Zero();
          for (int j = 0; j < c.num_fields; ++j) dDk += sc.dDk[k][j] * dY[j];
          const Vec2 g = grad_at(c, ws.grads.data(), slots[k], node);
          const Vec2 dg = grad_at(c, ws.dgrads.data(), slots[k], node);
          dG += dK * L.DkG[k] + L.R.K * (dDk * g) + L.R.K * (sc.Dk[k] * dg);
        }
        dG /= tau;
        const Vec9 dS = cross_diffusion_distribution(dG, l);
        store9(ws.post.data() + pidx(c, s, node), dcoll + tau * dS + 1.5 * tau * dF);
        store9(ws.fnew.data() + pidx(c, s, node), dF);
      }
      for (int o = 0; o < c.num_odes; ++o) {
        const OdeCoeffs& oc = co.o[o];
        double dR = 0.0;
        for (int j = 0; j < c.num_fields; ++j) dR += oc.dR[j] * dY[j];
        for (int p = 0; p < c.num_controls; ++p) dR += oc.dR_df[p] * dfv[p];
        const std::size_t k = static_cast<std::size_t>(o) * N + node;
        dout.ode[k] = din.ode[k] + tau * dR;
      }
    } catch (...) {
      err.capture(node);
    }
  }
  err.rethrow();
  finish_step(c, n == 0 ? ws.fnew.data() : din.fprev.data(), ws.post.data(), dout.pops.data());
  dout.fprev.swap(ws.fnew);
  ws.fnew.resize(c.pop_size());
}

void adjoint_step(const SolverContext& c, const ControlVector& f, int n, const StepState& base,
                  const StepState& abar_next, StepState& abar, ControlVector& fbar, Workspace& ws) {
  ws.ensure(c);
  const int N = c.nodes;
  const Lattice& l = c.lattice;
  const double tau = l.tau;
  const double half = 0.5 * tau;
  const std::size_t ng = c.grad_fields.size();
  abar.pops.resize(c.pop_size());
  abar.ode.resize(c.ode_size());
  abar.fprev.resize(c.pop_size());

  // psi* = cotangent of post-collision populations (after the characteristic term).
  stream_and_bounce_transpose(c, abar_next.pops.data(), ws.psistar.data());
  // Cotangent of the F_prev source used by this step.
  double* fpbar = ws.post.data();
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      double* o = fpbar + pidx(c, s, node);
      for (int q = 0; q < kQ; ++q) {
        double acc = 0.0;
        if (c.kappa_x[s] == 1) {
          const int from = c.grid.nbr(node, l.opposite[q]);
          if (from >= 0) acc -= half * ws.psistar[pidx(c, s, from) + q];
          if (c.grid.nbr(node, q) < 0) acc -= half * ws.psistar[pidx(c, s, node) + q];
        } else {
          acc = -half * ws.psistar[pidx(c, s, node) + q];
        }
        o[q] = acc;
      }
    }
  }

  recover_macroscopic(c, base, ws.fields.data());
  compute_gradients(c, ws.fields.data(), ws.grads.data());
  std::fill(ws.gbar.begin(), ws.gbar.end(), 0.0);
  FirstError err;
#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    try {
      NodeInput ni;
      gather(c, ws.fields.data(), f, n, node, ni);
      NodeCoeffs co;
      c.model->evaluate(ni.pt, co, true);
      std::array<double, kMaxFields> Ybar{};
      std::array<double, kMaxControls> fb{};
      SpeciesLocal L;
      for (int s = 0; s < c.num_species; ++s) {
        const SpeciesCoeffs& sc = co.s[s];
        species_local(c, s, sc, base.pops.data() + pidx(c, s, node), ni.Y[s], ws.grads.data(), node, L);
        const double scale = c.layout.d[s] * l.cs2 * tau;
        const Vec9 ps = load9(ws.psistar.data() + pidx(c, s, node));
        Vec9 Fbar = 1.5 * tau * ps + load9(abar_next.fprev.data() + pidx(c, s, node));
        if (n == 0) Fbar += load9(fpbar + pidx(c, s, node));
        Vec2 Gbar = Vec2::Zero();
        for (int i = 0; i < kQ; ++i) Gbar += (l.w[i] / l.cs2 * ps[i]) * l.e(i);
        Gbar *= tau;

        // collision
        const Vec9 rb = -(c.transform.M0inv.transpose() * ps);
        const Vec9 dmb = apply_pi_transpose(L.R, rb);
        Mat2 Kbar;
        Kbar << rb[3] * L.dm[3], rb[3] * L.dm[5], rb[5] * L.dm[3], rb[5] * L.dm[5];
        const Vec9 Dbar = c.transform.M0.transpose() * dmb;  // cotangent of phi - phi_eq
        const Vec9 wa = equilibrium_weights(sc.Tp, sc.Cp, c.layout.d[s], l);
        double thetab = -wa.dot(Dbar);
        const Vec9 phib = ps + Dbar;

        // force
        double Phib = 0.0;
        Vec2 Vb = Vec2::Zero();
        for (int i = 0; i < kQ; ++i) {
          const Vec2 e = l.e(i);
          Phib += l.w[i] * (1.0 + L.V.dot(e) / l.cs2) * Fbar[i];
          Vb += (sc.Phi * l.w[i] / l.cs2 * Fbar[i]) * e;
        }
        Mat2 Wbar = Mat2::Zero();
        if (c.layout.has_flux[s]) {
          const Vec2 pv = L.Pinv.transpose() * Vb;
          Wbar += pv * (sc.Tp - L.V).transpose();
          thetab += (L.Pinv * (L.Q * sc.Tpp)).dot(Vb);
        }

        // cross diffusion
        const Vec2 Gt = Gbar / tau;
        const auto& slots = c.cross_slot[s];
        for (std::size_t k = 0; k < slots.size(); ++k) {
          const Vec2 g = grad_at(c, ws.grads.data(), slots[k], node);
          Kbar += Gt * L.DkG[k].transpose();
          const Mat2 Dkb = (L.R.K.transpose() * Gt) * g.transpose();
          for (int j = 0; j < c.num_fields; ++j) Ybar[j] += (Dkb.array() * sc.dDk[k][j].array()).sum();
          const Vec2 gb = (L.R.K * sc.Dk[k]).transpose() * Gt;
          double* gbp = ws.gbar.data() + slots[k] * 2 * static_cast<std::size_t>(N) + 2 * static_cast<std::size_t>(node);
          gbp[0] += gb[0];
          gbp[1] += gb[1];
        }

        if (c.layout.state_dependent_diffusion[s]) {
          Wbar += -L.R.K.transpose() * Kbar * L.R.K.transpose();
          const Mat2 Db = Wbar / scale;
          for (int j = 0; j < c.num_fields; ++j) Ybar[j] += (Db.array() * sc.dD[j].array()).sum();
        }
        for (int j = 0; j < c.num_fields; ++j) Ybar[j] += Phib * sc.dPhi[j];
        for (int p = 0; p < c.num_controls; ++p) fb[p] += Phib * sc.dPhi_df[p];
        Ybar[s] += thetab;
        store9(abar.pops.data() + pidx(c, s, node), phib);
      }
      for (int o = 0; o < c.num_odes; ++o) {
        const OdeCoeffs& oc = co.o[o];
        const std::size_t k = static_cast<std::size_t>(o) * N + node;
        const double mb = abar_next.ode[k];
        abar.ode[k] = mb;
        for (int j = 0; j < c.num_fields; ++j) Ybar[j] += tau * mb * oc.dR[j];
        for (int p = 0; p < c.num_controls; ++p) fb[p] += tau * mb * oc.dR_df[p];
      }
      for (int j = 0; j < c.num_fields; ++j) ws.ybar[static_cast<std::size_t>(j) * N + node] = Ybar[j];
      for (int p = 0; p < c.num_controls; ++p) ws.fbar_node[static_cast<std::size_t>(p) * N + node] = fb[p];
    } catch (...) {
      err.capture(node);
    }
  }
  err.rethrow();

  // Gradient operator transpose into field cotangents.
  std::vector<double> tmp(N);
  for (std::size_t g = 0; g < ng; ++g) {
    c.grad.apply_transpose(ws.gbar.data() + g * 2 * N, tmp.data());
    double* yb = ws.ybar.data() + static_cast<std::size_t>(c.grad_fields[g]) * N;
    for (int node = 0; node < N; ++node) yb[node] += tmp[node];
  }

#pragma omp parallel for schedule(static)
  for (int node = 0; node < N; ++node) {
    for (int s = 0; s < c.num_species; ++s) {
      double* p = abar.pops.data() + pidx(c, s, node);
      const double yb = ws.ybar[static_cast<std::size_t>(s) * N + node];
      for (int q = 0; q < kQ; ++q) p[q] += yb;
    }
    for (int o = 0; o < c.num_odes; ++o) {
      abar.ode[static_cast<std::size_t>(o) * N + node] += ws.ybar[static_cast<std::size_t>(c.num_species + o) * N + node];
    }
  }
  if (n == 0) {
    std::fill(abar.fprev.begin(), abar.fprev.end(), 0.0);
  } else {
    std::copy(fpbar, fpbar + c.pop_size(), abar.fprev.begin());
  }

  // Control cotangent, reduced serially for supports shared between nodes.
  for (int p = 0; p < c.num_controls; ++p) {
    ControlData& d = fbar.slots[p];
    const double* src = ws.fbar_node.data() + static_cast<std::size_t>(p) * N;
    for (int node = 0; node < N; ++node) d.values[d.offset(n, node)] += src[node];
  }
}

}  // namespace chemolb
