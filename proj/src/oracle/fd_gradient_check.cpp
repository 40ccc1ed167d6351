#include <cmath>
#include <fmt/format.h>

#include "chemolb/errors.hpp"
#include "chemolb/oracle.hpp"

namespace chemolb::oracle {

GradientCheckReport fd_gradient_check(const std::function<double(const Eigen::VectorXd&)>& J, const Eigen::VectorXd& x,
                                      const Eigen::VectorXd& gradient,
                                      const std::vector<Eigen::VectorXd>& directions, double eps, double tol) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ParameterError("fd_gradient_check: eps must lie in [1e-7, 1e-3]");
  GradientCheckReport rep;
  rep.pass = true;
  auto central = [&](const Eigen::VectorXd& d, double e) { return (J(x + e * d) - J(x - e * d)) / (2.0 * e); };
  auto rel = [](double a, double b) {
    const double scale = std::max({std::fabs(a), std::fabs(b), 1e-300});
    return std::fabs(a - b) / scale;
  };
  for (const auto& d : directions) {
    DirectionCheck row;
    row.analytic = gradient.dot(d);
    row.fd = central(d, eps);
    row.fd_half = central(d, 0.5 * eps);
    row.richardson = (4.0 * row.fd_half - row.fd) / 3.0;
    row.rel_error = rel(row.analytic, row.fd_half);
    row.rel_richardson = rel(row.fd, row.fd_half);
    row.pass = row.rel_error <= tol && row.rel_richardson <= tol;
    rep.max_rel_error = std::max(rep.max_rel_error, row.rel_error);
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

std::string GradientCheckReport::table() const {
  std::string s = fmt::format("{:>4} {:>22} {:>22} {:>22} {:>10} {:>10} {}\n", "dir", "adjoint", "fd(eps)", "fd(eps/2)",
                              "rel_err", "rich", "ok");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    s += fmt::format("{:>4} {:>22.15e} {:>22.15e} {:>22.15e} {:>10.2e} {:>10.2e} {}\n", i, r.analytic, r.fd, r.fd_half,
                     r.rel_error, r.rel_richardson, r.pass ? "yes" : "NO");
  }
  return s;
}

}  // namespace chemolb::oracle
