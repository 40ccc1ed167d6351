#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "chemolb/objective.hpp"

namespace chemolb {

using VecX = Eigen::VectorXd;

enum class Method { Gradient, CgFR, CgPR, CgHS, CgDY };
enum class StepRule { Fixed, Heuristic, Quadratic, Armijo };

Method parse_method(const std::string& s);
std::string method_name(Method m);
StepRule parse_step_rule(const std::string& s);
std::string step_rule_name(StepRule r);

struct OptimizerConfig {
  Method method = Method::CgPR;
  StepRule step_rule = StepRule::Armijo;
  double fixed_step = 1.0;
  double initial_step = 1.0;
  double min_step = 1e-12;  // m0
  double max_step = 1e12;   // M0
  int max_iter = 200;
  double tol = 1e-6;  // relative to the iteration-0 gradient norm
  double restart_threshold = 0.2;
  double c1 = 1e-4;
  double c2 = 0.9;  // curvature skip-check
  int max_backtracks = 40;
  // Replaces the beta formula when set (k, g, g_prev, d_prev).
  std::function<double(int, const VecX&, const VecX&, const VecX&)> custom_beta;

  void validate() const;
};

OptimizerConfig load_optimizer_config(const ConfigDocument& doc);

// Smooth objective on a box.
class Problem {
 public:
  virtual ~Problem() = default;
  virtual int size() const = 0;
  // May throw DivergenceError; the optimizer treats that as J = inf.
  virtual double value(const VecX& x) = 0;
  virtual double value_and_gradient(const VecX& x, VecX& g) = 0;
  virtual VecX lower() const = 0;
  virtual VecX upper() const = 0;
};

VecX project(const VecX& x, const VecX& lo, const VecX& hi);

struct IterationRecord {
  int k = 0;
  double J = 0.0;
  double grad_l2 = 0.0;
  double grad_inf = 0.0;
  double step = 0.0;
  double wall_seconds = 0.0;
};

// Everything needed to continue an optimization bit-for-bit.
struct OptimizerState {
  int k = 0;
  VecX x, g, g_prev, d_prev;
  double J = 0.0;
  double g0_norm = 0.0;
  double step_prev = 0.0;
  bool restart = true;

  std::string to_json() const;
  static OptimizerState from_json(const std::string& text);
};

struct OptimizeResult {
  VecX x;
  double J = 0.0;
  VecX g;
  std::vector<IterationRecord> records;
  bool converged = false;
  bool diverged = false;
  std::string message;
  OptimizerState state;
};

using IterationCallback = std::function<void(const IterationRecord&, const OptimizerState&)>;

OptimizeResult optimize(Problem& problem, const VecX& x0, const OptimizerConfig& cfg,
                        const IterationCallback& callback = {}, const std::optional<OptimizerState>& resume = {});

// Vertex of the quadratic through (0, J0), (za, Ja), (zb, Jb), clamped to
// [lo, hi]; nullopt when the curvature is not positive.
std::optional<double> line_search_quadratic(double J0, double za, double Ja, double zb, double Jb, double lo,
                                            double hi);

// Control problem on the flattened active control values.
class ControlProblem : public Problem {
 public:
  ControlProblem(const ProblemModel& model, const ForwardSolver& solver, const ObjectiveSpec& spec,
                 ControlVector templ);
  int size() const override { return static_cast<int>(templ_.size()); }
  double value(const VecX& x) override;
  double value_and_gradient(const VecX& x, VecX& g) override;
  VecX lower() const override { return lo_; }
  VecX upper() const override { return hi_; }
  ControlVector controls(const VecX& x) const;
  VecX flatten(const ControlVector& f) const;
  int evaluations() const { return evals_; }

 private:
  const ForwardSolver& solver_;
  const ObjectiveSpec& spec_;
  ControlVector templ_;
  std::vector<bool> active_;  // per flattened entry
  VecX lo_, hi_;
  int evals_ = 0;
};

}  // namespace chemolb
