#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "chemolb/errors.hpp"
#include "chemolb/oracle.hpp"

namespace chemolb::oracle {

namespace {

struct Cell {
  NodeCoeffs co;
};

std::vector<double> initial_from_model(const ProblemModel& m) {
  const int nx = m.domain.nx, ny = m.domain.ny, N = nx * ny;
  std::vector<double> out(static_cast<std::size_t>(m.num_fields()) * N);
  for (int j = 0; j < m.num_fields(); ++j) {
    const Expression& e = j < m.num_species() ? m.species[j].initial : m.odes[j - m.num_species()].initial;
    const auto prog = expr::Program::compile(e, {"x", "y"});
    for (int c = 0; c < N; ++c) {
      const double env[2] = {(c % nx + 0.5) * m.domain.h, (c / nx + 0.5) * m.domain.h};
      out[static_cast<std::size_t>(j) * N + c] = prog.eval(env);
    }
  }
  return out;
}

}  // namespace

FDResult run_fd(const ProblemModel& model, const ControlVector& f, const FDOptions& opt) {
  return run_fd(model, f, initial_from_model(model), opt);
}

FDResult run_fd(const ProblemModel& model, const ControlVector& f, const std::vector<double>& initial,
                const FDOptions& opt) {
  const CompiledModel cm(model);
  const ModelLayout& L = cm.layout();
  const int nx = model.domain.nx, ny = model.domain.ny, N = nx * ny;
  const int S = L.num_species, nf = L.num_fields, nc = L.num_controls;
  const double h = model.domain.h;
  const double tau = model.time.dt;
  const int steps = model.time.steps;

  FDResult res;
  std::vector<double> y = initial;
  res.fields.push_back(y);
  std::vector<Cell> cells(N);
  std::vector<double> rhs(static_cast<std::size_t>(nf) * N);

  auto at = [&](const std::vector<double>& v, int field, int i, int j) {
    i = std::clamp(i, 0, nx - 1);  // mirrored ghost
    j = std::clamp(j, 0, ny - 1);
    return v[static_cast<std::size_t>(field) * N + j * nx + i];
  };
  // d/dy at cell (i, j) and d/dx, central with mirrored ghosts
  auto cdy = [&](const std::vector<double>& v, int field, int i, int j) {
    return (at(v, field, i, j + 1) - at(v, field, i, j - 1)) / (2.0 * h);
  };
  auto cdx = [&](const std::vector<double>& v, int field, int i, int j) {
    return (at(v, field, i + 1, j) - at(v, field, i - 1, j)) / (2.0 * h);
  };

  for (int n = 0; n < steps; ++n) {
    double t = n * tau;
    double remaining = tau;
    while (remaining > 1e-14 * tau) {
      // coefficients at the current state
      double lam = 0.0, adv = 0.0;
      for (int c = 0; c < N; ++c) {
        std::array<double, kMaxFields> Y{};
        std::array<double, kMaxControls> fv{};
        for (int k = 0; k < nf; ++k) Y[k] = y[static_cast<std::size_t>(k) * N + c];
        for (int p = 0; p < nc; ++p) fv[p] = f.at(p, n, c);
        NodePoint pt;
        pt.x = (c % nx + 0.5) * h;
        pt.y = (c / nx + 0.5) * h;
        pt.t = t;
        pt.level = n;
        pt.node = c;
        pt.fields = Y.data();
        pt.controls = fv.data();
        cm.evaluate(pt, cells[c].co, false);
        for (int s = 0; s < S; ++s) {
          const Mat2& D = cells[c].co.s[s].D;
          lam = std::max(lam, std::fabs(D(0, 0)) + std::fabs(D(0, 1)) + std::fabs(D(1, 1)));
          adv = std::max(adv, cells[c].co.s[s].Tp.lpNorm<1>());
          for (std::size_t k = 0; k < L.cross_partner[s].size(); ++k) {
            const Mat2& A = cells[c].co.s[s].Dk[k];
            lam = std::max(lam, A.cwiseAbs().sum());
          }
        }
      }
      double dt = remaining;
      if (lam > 0.0) dt = std::min(dt, opt.safety * h * h / (2.0 * lam));
      if (adv > 0.0) dt = std::min(dt, opt.safety * h / adv);
      const int sub = static_cast<int>(std::ceil(remaining / dt - 1e-9));
      dt = remaining / sub;
      (void)sub;

      std::fill(rhs.begin(), rhs.end(), 0.0);
      for (int s = 0; s < S; ++s) {
        // x faces
        for (int j = 0; j < ny; ++j) {
          for (int i = 0; i + 1 < nx; ++i) {
            const int cl = j * nx + i, cr = cl + 1;
            const SpeciesCoeffs& a = cells[cl].co.s[s];
            const SpeciesCoeffs& b = cells[cr].co.s[s];
            const Mat2 D = 0.5 * (a.D + b.D);
            const double gx = (at(y, s, i + 1, j) - at(y, s, i, j)) / h;
            const double gy = 0.5 * (cdy(y, s, i, j) + cdy(y, s, i + 1, j));
            double F = -(D(0, 0) * gx + D(0, 1) * gy);
            const double vel = 0.5 * (a.Tp[0] + b.Tp[0]);
            if (vel >= 0.0) {
              F += i >= 1 ? 1.5 * a.T[0] - 0.5 * cells[cl - 1].co.s[s].T[0] : a.T[0];
            } else {
              F += i + 2 < nx ? 1.5 * b.T[0] - 0.5 * cells[cr + 1].co.s[s].T[0] : b.T[0];
            }
            for (std::size_t k = 0; k < L.cross_partner[s].size(); ++k) {
              const int pf = L.cross_partner[s][k];
              const Mat2 A = 0.5 * (a.Dk[k] + b.Dk[k]);
              const double hx = (at(y, pf, i + 1, j) - at(y, pf, i, j)) / h;
              const double hy = 0.5 * (cdy(y, pf, i, j) + cdy(y, pf, i + 1, j));
              F += A(0, 0) * hx + A(0, 1) * hy;
            }
            rhs[static_cast<std::size_t>(s) * N + cl] -= F / h;
            rhs[static_cast<std::size_t>(s) * N + cr] += F / h;
          }
        }
        // y faces
        for (int j = 0; j + 1 < ny; ++j) {
          for (int i = 0; i < nx; ++i) {
            const int cb = j * nx + i, ct = cb + nx;
            const SpeciesCoeffs& a = cells[cb].co.s[s];
            const SpeciesCoeffs& b = cells[ct].co.s[s];
            const Mat2 D = 0.5 * (a.D + b.D);
            const double gy = (at(y, s, i, j + 1) - at(y, s, i, j)) / h;
            const double gx = 0.5 * (cdx(y, s, i, j) + cdx(y, s, i, j + 1));
            double F = -(D(1, 0) * gx + D(1, 1) * gy);
            const double vel = 0.5 * (a.Tp[1] + b.Tp[1]);
            if (vel >= 0.0) {
              F += j >= 1 ? 1.5 * a.T[1] - 0.5 * cells[cb - nx].co.s[s].T[1] : a.T[1];
            } else {
              F += j + 2 < ny ? 1.5 * b.T[1] - 0.5 * cells[ct + nx].co.s[s].T[1] : b.T[1];
            }
            for (std::size_t k = 0; k < L.cross_partner[s].size(); ++k) {
              const int pf = L.cross_partner[s][k];
              const Mat2 A = 0.5 * (a.Dk[k] + b.Dk[k]);
              const double hy = (at(y, pf, i, j + 1) - at(y, pf, i, j)) / h;
              const double hx = 0.5 * (cdx(y, pf, i, j) + cdx(y, pf, i, j + 1));
              F += A(1, 0) * hx + A(1, 1) * hy;
            }
            rhs[static_cast<std::size_t>(s) * N + cb] -= F / h;
            rhs[static_cast<std::size_t>(s) * N + ct] += F / h;
          }
        }
        for (int c = 0; c < N; ++c) rhs[static_cast<std::size_t>(s) * N + c] += cells[c].co.s[s].Phi;
      }
      for (int o = 0; o < nf - S; ++o) {
        for (int c = 0; c < N; ++c) rhs[static_cast<std::size_t>(S + o) * N + c] = cells[c].co.o[o].R;
      }
      for (std::size_t k = 0; k < y.size(); ++k) y[k] += dt * rhs[k];
      for (double v : y) {
        if (!std::isfinite(v)) {
          throw DivergenceError(n, "", fmt::format("finite-difference oracle diverged at step {}", n));
        }
      }
      ++res.substeps_total;
      t += dt;
      remaining -= dt;
    }
    res.fields.push_back(y);
  }
  return res;
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace chemolb::oracle
