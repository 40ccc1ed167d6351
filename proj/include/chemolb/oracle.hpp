#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "chemolb/model.hpp"

namespace chemolb::oracle {

// Explicit finite-volume solver on the same cell-centred nodes: conservative
// face fluxes, zero flux on boundary faces, mixed derivatives through a
// 9-point stencil with mirrored ghosts, second-order upwind advection.
struct FDOptions {
  double safety = 0.4;  // fraction of the explicit stability bound
};

struct FDResult {
  // fields[level][j * nodes + node] at every lattice time level.
  std::vector<std::vector<double>> fields;
  int substeps_total = 0;
};

FDResult run_fd(const ProblemModel& model, const ControlVector& f, const FDOptions& opt = {});
// Initial fields override (SoA); the model's expressions are used otherwise.
FDResult run_fd(const ProblemModel& model, const ControlVector& f, const std::vector<double>& initial,
                const FDOptions& opt = {});

struct DirectionCheck {
  double analytic = 0.0;
  double fd = 0.0;          // step eps
  double fd_half = 0.0;     // step eps/2
  double richardson = 0.0;  // (4 fd_half - fd) / 3
  double rel_error = 0.0;   // analytic vs fd_half
  double rel_richardson = 0.0;  // fd vs fd_half
  bool pass = false;
};

struct GradientCheckReport {
  std::vector<DirectionCheck> rows;
  double max_rel_error = 0.0;
  bool pass = false;
  std::string table() const;
};

// Central differences of J along each direction at two step sizes.
GradientCheckReport fd_gradient_check(const std::function<double(const Eigen::VectorXd&)>& J, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& gradient,
                                      const std::vector<Eigen::VectorXd>& directions, double eps, double tol = 1e-4);

double relative_l2(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace chemolb::oracle
