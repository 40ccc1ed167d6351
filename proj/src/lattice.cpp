#include "chemolb/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "chemolb/errors.hpp"

namespace chemolb {

Lattice build_lattice(double h, double tau) {
  if (!(h > 0.0) || !(tau > 0.0)) {
    throw ParameterError("lattice: grid spacing and time step must be positive");
  }
  Lattice l;
  l.h = h;
  l.tau = tau;
  l.c = h / tau;
  l.cs2 = l.c * l.c / 3.0;
  l.ex = {0, 1, 0, -1, 0, 1, -1, -1, 1};
  l.ey = {0, 0, 1, 0, -1, 1, 1, -1, -1};
  l.w = {4.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0, 1.0 / 9.0,
         1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0, 1.0 / 36.0};
  l.opposite = {0, 3, 4, 1, 2, 7, 8, 5, 6};
  return l;
}

MomentTransform build_transform(const Lattice& lattice) {
  MomentTransform t;
  // clang-format off
  t.M0 <<  1,  1,  1,  1,  1,  1,  1,  1,  1,
          -4, -1, -1, -1, -1,  2,  2,  2,  2,
           4, -2, -2, -2, -2,  1,  1,  1,  1,
           0,  1,  0, -1,  0,  1, -1, -1,  1,
           0, -2,  0,  2,  0,  1, -1, -1,  1,
           0,  0,  1,  0, -1,  1,  1, -1, -1,
           0,  0, -2,  0,  2,  1,  1, -1, -1,
           0,  1, -1,  1, -1,  0,  0,  0,  0,
           0,  0,  0,  0,  0,  1, -1,  1, -1;
  // clang-format on
  const double c = lattice.c;
  t.E0 << 1, c * c, c * c * c * c, c, c * c * c, c, c * c * c, c * c, c * c;
  t.M = t.E0.asDiagonal() * t.M0;

  Eigen::FullPivLU<Mat9> lu0(t.M0);
  if (!lu0.isInvertible()) throw InternalError("moment transform: singular matrix");
  t.M0inv = lu0.inverse();
  // M^{-1} = M0^{-1} E0^{-1}; checking M0 M0^{-1} keeps the test independent of c
  t.Minv = t.M0inv * t.E0.cwiseInverse().asDiagonal();
  const double err = (t.M0 * t.M0inv - Mat9::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-12) throw InternalError("moment transform: inverse check failed");
  return t;
}

Vec9 moments(const MomentTransform& t, const Vec9& f) { return t.M * f; }

Vec9 inverse_moments(const MomentTransform& t, const Vec9& m) { return t.Minv * m; }

Grid::Grid(int nx_, int ny_, double h_, const Lattice& lattice) : nx(nx_), ny(ny_), h(h_) {
  if (nx < 3 || ny < 3) throw ParameterError("grid: need at least 3 nodes per direction");
  if (!(h > 0.0)) throw ParameterError("grid: spacing must be positive");
  neighbor.assign(static_cast<std::size_t>(nodes()) * kQ, -1);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      for (int q = 0; q < kQ; ++q) {
        const int ii = i + lattice.ex[q];
        const int jj = j + lattice.ey[q];
        if (ii >= 0 && ii < nx && jj >= 0 && jj < ny) {
          neighbor[static_cast<std::size_t>(index(i, j)) * kQ + q] = index(ii, jj);
        }
      }
    }
  }
}

namespace {

// Second-order derivative weights along one axis at position p of n points.
void axis_weights(int p, int n, double h, std::vector<std::pair<int, double>>& out) {
  out.clear();
  const double s = 1.0 / (2.0 * h);
  if (p > 0 && p < n - 1) {
    out = {{p - 1, -s}, {p + 1, s}};
  } else if (p == 0) {
    out = {{0, -3.0 * s}, {1, 4.0 * s}, {2, -s}};
  } else {
    out = {{n - 1, 3.0 * s}, {n - 2, -4.0 * s}, {n - 3, s}};
  }
}

}  // namespace

GradientOperator::GradientOperator(const Grid& grid, const Lattice& lattice) {
  std::vector<std::tuple<int, int, double>> trip;  // row, col, value
  std::vector<std::pair<int, double>> wts;
  const double scale = lattice.c / (lattice.cs2 * lattice.tau);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int node = grid.index(i, j);
      const bool interior = i > 0 && i < grid.nx - 1 && j > 0 && j < grid.ny - 1;
      if (interior) {
        for (int q = 1; q < kQ; ++q) {
          const int nb = grid.nbr(node, q);
          if (lattice.ex[q] != 0) trip.emplace_back(2 * node, nb, scale * lattice.w[q] * lattice.ex[q]);
          if (lattice.ey[q] != 0) trip.emplace_back(2 * node + 1, nb, scale * lattice.w[q] * lattice.ey[q]);
        }
      } else {
        axis_weights(i, grid.nx, grid.h, wts);
        for (auto [ii, v] : wts) trip.emplace_back(2 * node, grid.index(ii, j), v);
        axis_weights(j, grid.ny, grid.h, wts);
        for (auto [jj, v] : wts) trip.emplace_back(2 * node + 1, grid.index(i, jj), v);
      }
    }
  }

  auto build = [](std::vector<std::tuple<int, int, double>>& t, int rows, bool by_col) {
    Csr m;
    std::stable_sort(t.begin(), t.end(), [by_col](const auto& a, const auto& b) {
      return by_col ? std::get<1>(a) < std::get<1>(b) : std::get<0>(a) < std::get<0>(b);
    });
    m.start.assign(rows + 1, 0);
    for (const auto& e : t) ++m.start[(by_col ? std::get<1>(e) : std::get<0>(e)) + 1];
    for (int r = 0; r < rows; ++r) m.start[r + 1] += m.start[r];
    for (const auto& e : t) {
      m.col.push_back(by_col ? std::get<0>(e) : std::get<1>(e));
      m.val.push_back(std::get<2>(e));
    }
    return m;
  };
  forward_ = build(trip, 2 * grid.nodes(), false);
  transpose_ = build(trip, grid.nodes(), true);
}

void GradientOperator::apply(const double* field, double* out) const {
  const int rows = static_cast<int>(forward_.start.size()) - 1;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = forward_.start[r]; k < forward_.start[r + 1]; ++k) s += forward_.val[k] * field[forward_.col[k]];
    out[r] = s;
  }
}

void GradientOperator::apply_transpose(const double* grad_bar, double* out) const {
  const int rows = static_cast<int>(transpose_.start.size()) - 1;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int k = transpose_.start[r]; k < transpose_.start[r + 1]; ++k) s += transpose_.val[k] * grad_bar[transpose_.col[k]];
    out[r] = s;
  }
}

Vec2 GradientOperator::at(const double* field, int node) const {
  Vec2 g;
  for (int c = 0; c < 2; ++c) {
    const int r = 2 * node + c;
    double s = 0.0;
    for (int k = forward_.start[r]; k < forward_.start[r + 1]; ++k) s += forward_.val[k] * field[forward_.col[k]];
    g[c] = s;
  }
  return g;
}

}  // namespace chemolb
