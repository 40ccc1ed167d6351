#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <vector>

namespace chemolb {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

inline constexpr int kQ = 9;

// D2Q9 lattice: rest velocity, four axis velocities, four diagonals.
struct Lattice {
  double h = 1.0;
  double tau = 1.0;
  double c = 1.0;
  double cs2 = 1.0 / 3.0;
  std::array<int, kQ> ex{};
  std::array<int, kQ> ey{};
  std::array<double, kQ> w{};
  std::array<int, kQ> opposite{};

  Vec2 e(int i) const { return Vec2(c * ex[i], c * ey[i]); }
};

Lattice build_lattice(double h, double tau);

struct MomentTransform {
  Mat9 M0;
  Mat9 M0inv;
  Vec9 E0;  // diagonal of E0
  Mat9 M;
  Mat9 Minv;
};

MomentTransform build_transform(const Lattice& lattice);

Vec9 moments(const MomentTransform& t, const Vec9& f);
Vec9 inverse_moments(const MomentTransform& t, const Vec9& m);

// Cell-centred rectangular grid; node (i, j) sits at ((i + 1/2) h, (j + 1/2) h).
struct Grid {
  int nx = 0;
  int ny = 0;
  double h = 1.0;
  // neighbor[node * 9 + q] = node reached by one step along direction q, or -1.
  std::vector<int> neighbor;

  Grid() = default;
  Grid(int nx, int ny, double h, const Lattice& lattice);

  int nodes() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  double x(int node) const { return (node % nx + 0.5) * h; }
  double y(int node) const { return (node / nx + 0.5) * h; }
  int nbr(int node, int q) const { return neighbor[static_cast<std::size_t>(node) * kQ + q]; }
};

// Sparse gradient operator: isotropic lattice stencil in the interior,
// central or one-sided second-order differences on boundary nodes.
class GradientOperator {
 public:
  GradientOperator() = default;
  GradientOperator(const Grid& grid, const Lattice& lattice);

  // out has 2 * nodes entries, (gx, gy) per node.
  void apply(const double* field, double* out) const;
  // out[node] = sum over rows of G^T applied to the 2 * nodes input.
  void apply_transpose(const double* grad_bar, double* out) const;
  Vec2 at(const double* field, int node) const;

 private:
  struct Csr {
    std::vector<int> start;
    std::vector<int> col;
    std::vector<double> val;
  };
  Csr forward_;
  Csr transpose_;
};

}  // namespace chemolb
