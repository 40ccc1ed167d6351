#include "chemolb/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <json.hpp>

#include "chemolb/errors.hpp"

namespace chemolb {

Method parse_method(const std::string& s) {
  if (s == "gradient") return Method::Gradient;
  if (s == "cg-fr") return Method::CgFR;
  if (s == "cg-pr") return Method::CgPR;
  if (s == "cg-hs") return Method::CgHS;
  if (s == "cg-dy") return Method::CgDY;
  throw ParameterError("unknown method '" + s + "' (gradient, cg-fr, cg-pr, cg-hs, cg-dy)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Gradient: return "gradient";
    case Method::CgFR: return "cg-fr";
    case Method::CgPR: return "cg-pr";
    case Method::CgHS: return "cg-hs";
    case Method::CgDY: return "cg-dy";
  }
  return "?";
}

StepRule parse_step_rule(const std::string& s) {
  if (s == "fixed") return StepRule::Fixed;
  if (s == "heuristic") return StepRule::Heuristic;
  if (s == "quadratic") return StepRule::Quadratic;
  if (s == "armijo") return StepRule::Armijo;
  throw ParameterError("unknown step rule '" + s + "' (fixed, heuristic, quadratic, armijo)");
}

std::string step_rule_name(StepRule r) {
  switch (r) {
    case StepRule::Fixed: return "fixed";
    case StepRule::Heuristic: return "heuristic";
    case StepRule::Quadratic: return "quadratic";
    case StepRule::Armijo: return "armijo";
  }
  return "?";
}

void OptimizerConfig::validate() const {
  if (!(min_step > 0.0 && min_step <= max_step)) throw ParameterError("optimizer: need 0 < min_step <= max_step");
  if (max_iter < 0) throw ParameterError("optimizer: max_iter must be non-negative");
  if (!(tol >= 0.0)) throw ParameterError("optimizer: tol must be non-negative");
  if (!(c1 > 0.0 && c1 < 1.0)) throw ParameterError("optimizer: c1 must lie in (0, 1)");
  if (!(fixed_step > 0.0 && initial_step > 0.0)) throw ParameterError("optimizer: steps must be positive");
}

OptimizerConfig load_optimizer_config(const ConfigDocument& doc) {
  OptimizerConfig c;
  const std::string sec = "optimizer";
  auto wrap = [&](const std::string& key, auto fn) {
    try {
      fn();
    } catch (const ParameterError& e) {
      throw ConfigError(sec, key, e.what());
    }
  };
  wrap("method", [&] { c.method = parse_method(doc.get_string(sec, "method", "cg-pr")); });
  wrap("step_rule", [&] { c.step_rule = parse_step_rule(doc.get_string(sec, "step_rule", "armijo")); });
  c.fixed_step = doc.get_double(sec, "fixed_step", c.fixed_step);
  c.initial_step = doc.get_double(sec, "initial_step", c.initial_step);
  c.min_step = doc.get_double(sec, "min_step", c.min_step);
  c.max_step = doc.get_double(sec, "max_step", c.max_step);
  c.max_iter = doc.get_int(sec, "max_iter", c.max_iter);
  c.tol = doc.get_double(sec, "tol", c.tol);
  c.restart_threshold = doc.get_double(sec, "restart_threshold", c.restart_threshold);
  c.c1 = doc.get_double(sec, "c1", c.c1);
  c.c2 = doc.get_double(sec, "c2", c.c2);
  c.max_backtracks = doc.get_int(sec, "max_backtracks", c.max_backtracks);
  wrap("", [&] { c.validate(); });
  doc.reject_unused({sec});
  return c;
}

VecX project(const VecX& x, const VecX& lo, const VecX& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

std::optional<double> line_search_quadratic(double J0, double za, double Ja, double zb, double Jb, double lo,
                                            double hi) {
  // J(z) = J0 + b z + c z^2 through the two samples
  const double det = za * zb * (zb - za);
  if (!(std::fabs(det) > 0.0)) return std::nullopt;
  const double ra = Ja - J0, rb = Jb - J0;
  const double c = (za * rb - zb * ra) / det;
  const double b = (zb * zb * ra - za * za * rb) / det;
  if (!(c > 0.0) || !std::isfinite(c) || !std::isfinite(b)) return std::nullopt;
  return std::clamp(-b / (2.0 * c), lo, hi);
}

// ---- state serialization ----

namespace {

nlohmann::json vec_json(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VecX json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string OptimizerState::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["J"] = J;
  j["g0_norm"] = g0_norm;
  j["step_prev"] = step_prev;
  j["restart"] = restart;
  j["x"] = vec_json(x);
  j["g"] = vec_json(g);
  j["g_prev"] = vec_json(g_prev);
  j["d_prev"] = vec_json(d_prev);
  return j.dump(1);
}

OptimizerState OptimizerState::from_json(const std::string& text) {
  OptimizerState s;
  try {
    const auto j = nlohmann::json::parse(text);
    s.k = j.at("k").get<int>();
    s.J = j.at("J").get<double>();
    s.g0_norm = j.at("g0_norm").get<double>();
    s.step_prev = j.at("step_prev").get<double>();
    s.restart = j.at("restart").get<bool>();
    s.x = json_vec(j.at("x"));
    s.g = json_vec(j.at("g"));
    s.g_prev = json_vec(j.at("g_prev"));
    s.d_prev = json_vec(j.at("d_prev"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("resume", "state", std::string("invalid optimizer state: ") + e.what());
  }
  return s;
}

// ---- driver ----

namespace {

double safe_value(Problem& p, const VecX& x) {
  try {
    const double v = p.value(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const DivergenceError&) {
    return std::numeric_limits<double>::infinity();
  } catch (const StabilityError&) {
    return std::numeric_limits<double>::infinity();
  }
}

double beta(const OptimizerConfig& cfg, int k, const VecX& g, const VecX& gp, const VecX& dp) {
  if (cfg.custom_beta) return cfg.custom_beta(k, g, gp, dp);
  const VecX y = g - gp;
  const double gg = g.squaredNorm(), gpgp = gp.squaredNorm(), dy = dp.dot(y);
  switch (cfg.method) {
    case Method::Gradient: return 0.0;
    case Method::CgFR: return gpgp > 0.0 ? gg / gpgp : 0.0;
    case Method::CgPR: return gpgp > 0.0 ? std::max(0.0, g.dot(y) / gpgp) : 0.0;
    case Method::CgHS: return dy != 0.0 ? std::max(0.0, g.dot(y) / dy) : 0.0;
    case Method::CgDY: return dy != 0.0 ? gg / dy : 0.0;
  }
  return 0.0;
}

// Zeroes components that push against an active bound.
VecX feasible_direction(const VecX& d, const VecX& x, const VecX& lo, const VecX& hi) {
  VecX r = d;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if ((x[i] <= lo[i] && d[i] < 0.0) || (x[i] >= hi[i] && d[i] > 0.0)) r[i] = 0.0;
  }
  return r;
}

// Norm of x - P(x - g); equals |g| away from active bounds.
double projected_gradient_norm(const VecX& x, const VecX& g, const VecX& lo, const VecX& hi) {
  return (x - project(x - g, lo, hi)).norm();
}

// 0 where x sits on a bound and -g points out of the box, 1 elsewhere.
VecX binding_mask(const VecX& x, const VecX& g, const VecX& lo, const VecX& hi) {
  VecX m = VecX::Ones(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) m[i] = 0.0;
  }
  return m;
}

struct Trial {
  double step = 0.0;
  VecX x;
  double J = std::numeric_limits<double>::infinity();
  bool diverged = false;
};

}  // namespace

OptimizeResult optimize(Problem& problem, const VecX& x0, const OptimizerConfig& cfg,
                        const IterationCallback& callback, const std::optional<OptimizerState>& resume) {
  cfg.validate();
  const VecX lo = problem.lower(), hi = problem.upper();
  OptimizeResult res;
  OptimizerState st;
  const auto t0 = std::chrono::steady_clock::now();
  if (resume) {
    st = *resume;
    if (st.x.size() != problem.size()) throw ConfigError("resume", "state", "control size does not match the problem");
  } else {
    st.x = project(x0, lo, hi);
    st.g.resize(problem.size());
    st.J = problem.value_and_gradient(st.x, st.g);
    st.g0_norm = projected_gradient_norm(st.x, st.g, lo, hi);
    st.step_prev = cfg.initial_step;
    st.restart = true;
  }

  auto trial = [&](double z, const VecX& d) {
    Trial t;
    t.step = z;
    t.x = project(st.x + z * d, lo, hi);
    t.J = safe_value(problem, t.x);
    t.diverged = !std::isfinite(t.J);
    return t;
  };
  auto armijo_ok = [&](const Trial& t) {
    return std::isfinite(t.J) && t.J <= st.J + cfg.c1 * st.g.dot(t.x - st.x);
  };
  auto clampz = [&](double z) { return std::clamp(z, cfg.min_step, cfg.max_step); };

  while (true) {
    IterationRecord rec;
    rec.k = st.k;
    rec.J = st.J;
    rec.grad_l2 = st.g.norm();
    rec.grad_inf = st.g.size() ? st.g.lpNorm<Eigen::Infinity>() : 0.0;
    rec.step = st.k == 0 ? 0.0 : st.step_prev;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.records.push_back(rec);
    if (callback) callback(rec, st);

    const double gnorm = projected_gradient_norm(st.x, st.g, lo, hi);
    if (gnorm <= cfg.tol * st.g0_norm || gnorm == 0.0) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      break;
    }
    if (st.k >= cfg.max_iter) {
      res.message = "iteration limit reached";
      break;
    }

    // direction, built from gradients restricted to the free variables
    const VecX free = binding_mask(st.x, st.g, lo, hi);
    const VecX gr = st.g.cwiseProduct(free);
    VecX d = -gr;
    const bool conjugate = cfg.method != Method::Gradient || cfg.custom_beta;
    if (conjugate && !st.restart && st.d_prev.size() == d.size()) {
      const VecX gpr = st.g_prev.cwiseProduct(free), dpr = st.d_prev.cwiseProduct(free);
      // Powell restart when successive gradients are far from orthogonal
      const bool powell = !cfg.custom_beta && std::fabs(gr.dot(gpr)) >= cfg.restart_threshold * gr.squaredNorm();
      if (!powell) d += beta(cfg, st.k, gr, gpr, dpr) * dpr;
      if (st.g.dot(d) >= 0.0) d = -gr;
    }
    d = feasible_direction(d, st.x, lo, hi);
    if (d.squaredNorm() == 0.0) {
      res.converged = true;
      res.message = "projected gradient vanishes";
      break;
    }

    // step
    std::optional<Trial> accepted;
    bool any_diverged = false;
    auto backtrack = [&](double z, Trial t) -> std::optional<Trial> {
      for (int b = 0; b < cfg.max_backtracks; ++b) {
        if (armijo_ok(t)) return t;
        any_diverged = any_diverged || t.diverged;
        double znew = 0.5 * z;
        if (std::isfinite(t.J)) {
          // minimizer of the quadratic through J(0), slope and J(z)
          const double slope = st.g.dot(d);
          const double den = 2.0 * (t.J - st.J - slope * z);
          if (den > 0.0) znew = std::clamp(-slope * z * z / den, 0.1 * z, 0.5 * z);
        }
        if (znew < cfg.min_step) break;
        z = znew;
        t = trial(z, d);
      }
      return std::nullopt;
    };
    switch (cfg.step_rule) {
      case StepRule::Fixed:
      case StepRule::Heuristic: {
        const double z = cfg.step_rule == StepRule::Fixed
                             ? clampz(cfg.fixed_step)
                             : clampz(std::min(1.0, 1.0 / std::max(st.g.lpNorm<Eigen::Infinity>(), 1e-300)));
        Trial t = trial(z, d);
        if (t.diverged) {
          any_diverged = true;
        } else {
          accepted = t;
        }
        break;
      }
      case StepRule::Armijo: {
        double z = clampz(st.step_prev);
        Trial t = trial(z, d);
        if (armijo_ok(t)) {
          // vertex of the quadratic through J(0), slope and J(z)
          const double slope = st.g.dot(d);
          const double den = 2.0 * (t.J - st.J - slope * z);
          bool refined = false;
          if (den > 0.0) {
            const double zq = std::clamp(-slope * z * z / den, cfg.min_step, cfg.max_step);
            if (std::fabs(zq - z) > 1e-3 * z) {
              Trial tq = trial(zq, d);
              if (armijo_ok(tq) && tq.J < t.J) {
                t = tq;
                z = zq;
                refined = true;
              }
            }
          }
          // extrapolate while the sufficient-decrease test keeps improving
          for (int e = 0; e < 10 && !refined && z * 2.0 <= cfg.max_step; ++e) {
            Trial t2 = trial(2.0 * z, d);
            if (!armijo_ok(t2) || t2.J >= t.J) break;
            t = t2;
            z = t2.step;
          }
          accepted = t;
        } else {
          accepted = backtrack(z, t);
        }
        break;
      }
      case StepRule::Quadratic: {
        const double za = clampz(st.step_prev);
        const double zb = clampz(2.0 * za);
        Trial ta = trial(za, d);
        Trial tb = trial(zb, d);
        std::optional<double> zv;
        if (std::isfinite(ta.J) && std::isfinite(tb.J)) {
          zv = line_search_quadratic(st.J, za, ta.J, zb, tb.J, cfg.min_step, cfg.max_step);
        }
        Trial best = ta.J <= tb.J ? ta : tb;
        if (zv) {
          Trial tv = trial(*zv, d);
          if (tv.J < best.J) best = tv;
        }
        if (armijo_ok(best)) {
          accepted = best;
        } else {
          accepted = backtrack(za, ta);
        }
        break;
      }
    }
    if (!accepted) {
      res.diverged = any_diverged;
      res.message = any_diverged ? "forward solve diverged for every trial step; returning last stable iterate"
                                 : "line search failed to find a decrease";
      break;
    }

    VecX gnew(problem.size());
    double Jnew;
    try {
      Jnew = problem.value_and_gradient(accepted->x, gnew);
    } catch (const DivergenceError& e) {
      res.diverged = true;
      res.message = std::string("adjoint sweep diverged: ") + e.what();
      break;
    }
    // curvature skip-check: a step too short for the Wolfe curvature test restarts CG
    const bool curvature_ok = gnew.dot(d) >= cfg.c2 * st.g.dot(d);
    st.g_prev = st.g;
    st.d_prev = d;
    st.x = accepted->x;
    st.J = Jnew;
    st.g = gnew;
    st.step_prev = accepted->step;
    st.restart = !curvature_ok;
    st.k += 1;
  }
  res.x = st.x;
  res.J = st.J;
  res.g = st.g;
  res.state = st;
  return res;
}

// ---- control problem ----

ControlProblem::ControlProblem(const ProblemModel& model, const ForwardSolver& solver, const ObjectiveSpec& spec,
                               ControlVector templ)
    : solver_(solver), spec_(spec), templ_(std::move(templ)) {
  const std::size_t n = templ_.size();
  lo_.resize(static_cast<Eigen::Index>(n));
  hi_.resize(static_cast<Eigen::Index>(n));
  active_.assign(n, true);
  std::size_t k = 0;
  for (std::size_t p = 0; p < templ_.slots.size(); ++p) {
    const ControlData& d = templ_.slots[p];
    const bool act = model.controls[p].active;
    for (double v : d.values) {
      active_[k] = act;
      lo_[static_cast<Eigen::Index>(k)] = act ? d.lower : v;
      hi_[static_cast<Eigen::Index>(k)] = act ? d.upper : v;
      ++k;
    }
  }
}

ControlVector ControlProblem::controls(const VecX& x) const {
  ControlVector f = templ_;
  f.assign(std::vector<double>(x.data(), x.data() + x.size()));
  return f;
}

VecX ControlProblem::flatten(const ControlVector& f) const {
  const auto v = f.flatten();
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

double ControlProblem::value(const VecX& x) {
  ++evals_;
  return evaluate_cost(solver_, spec_, controls(x));
}

double ControlProblem::value_and_gradient(const VecX& x, VecX& g) {
  ++evals_;
  const GradientResult r =
      assemble_gradient_discrete(solver_, spec_, controls(x), RecordPolicy::automatic(solver_.context().nodes,
                                                                                      solver_.steps()));
  g = flatten(r.gradient);
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!active_[static_cast<std::size_t>(i)]) g[i] = 0.0;
  }
  return r.J;
}

}  // namespace chemolb
