#include "chemolb/forward.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chemolb/errors.hpp"

namespace chemolb {

RecordPolicy RecordPolicy::automatic(int nodes, int steps) {
  RecordPolicy p;
  const double budget = 64.0 * 64.0 * 2001.0;
  p.mode = static_cast<double>(nodes) * (steps + 1) <= budget ? RecordMode::Full : RecordMode::Checkpointed;
  return p;
}

std::vector<double> initial_fields(const ProblemModel& m) {
  const int N = m.domain.nx * m.domain.ny;
  std::vector<double> out(static_cast<std::size_t>(m.num_fields()) * N);
  std::vector<expr::Program> progs;
  const std::vector<std::string> slots{"x", "y"};
  for (const auto& s : m.species) progs.push_back(expr::Program::compile(s.initial, slots));
  for (const auto& o : m.odes) progs.push_back(expr::Program::compile(o.initial, slots));
  for (int j = 0; j < m.num_fields(); ++j) {
    for (int node = 0; node < N; ++node) {
      const double env[2] = {(node % m.domain.nx + 0.5) * m.domain.h, (node / m.domain.nx + 0.5) * m.domain.h};
      out[static_cast<std::size_t>(j) * N + node] = progs[j].eval(env);
    }
  }
  return out;
}

ForwardSolver::ForwardSolver(std::shared_ptr<const NodeModel> model, const DomainSpec& domain, const TimeSpec& time,
                             std::vector<double> fields0)
    : initial_fields_(std::move(fields0)) {
  ctx_.model = std::move(model);
  setup(domain, time);
}

ForwardSolver::ForwardSolver(const ProblemModel& model)
    : ForwardSolver(std::make_shared<CompiledModel>(model), model.domain, model.time, chemolb::initial_fields(model)) {}

void ForwardSolver::setup(const DomainSpec& domain, const TimeSpec& time) {
  SolverContext& c = ctx_;
  if (domain.nx < 3 || domain.ny < 3) throw ConfigError("domain", "nx", "grid needs at least 3 nodes per axis");
  if (time.steps < 0) throw ConfigError("time", "steps", "must be non-negative");
  if (time.kappa_x != 0 && time.kappa_x != 1) throw ConfigError("time", "kappa_x", "must be 0 or 1");
  c.layout = c.model->layout();
  c.lattice = build_lattice(domain.h, time.dt);
  c.transform = build_transform(c.lattice);
  c.grid = Grid(domain.nx, domain.ny, domain.h, c.lattice);
  c.grad = GradientOperator(c.grid, c.lattice);
  c.steps = time.steps;
  c.dt = time.dt;
  c.nodes = c.grid.nodes();
  c.num_species = c.layout.num_species;
  c.num_fields = c.layout.num_fields;
  c.num_odes = c.num_fields - c.num_species;
  c.num_controls = c.layout.num_controls;
  c.species_names.assign(c.layout.field_names.begin(), c.layout.field_names.begin() + c.num_species);
  c.cross_slot.assign(c.num_species, {});
  for (int s = 0; s < c.num_species; ++s) {
    for (int partner : c.layout.cross_partner[s]) {
      auto it = std::find(c.grad_fields.begin(), c.grad_fields.end(), partner);
      if (it == c.grad_fields.end()) {
        c.grad_fields.push_back(partner);
        it = c.grad_fields.end() - 1;
      }
      c.cross_slot[s].push_back(static_cast<int>(it - c.grad_fields.begin()));
    }
  }
  if (initial_fields_.size() != static_cast<std::size_t>(c.num_fields) * c.nodes) {
    throw PreconditionError("initial fields do not match the grid and field count");
  }
  cfl_limit_ = time.cfl_limit;

  // Inspect the coefficients on the initial data: kappa_x fallback, CFL guard,
  // positive definiteness of D.
  c.kappa_x.assign(c.num_species, time.kappa_x);
  const int nf = c.num_fields;
  std::vector<double> zeros(std::max(1, c.num_controls), 0.0);
  double max_diff = 0.0, max_adv = 0.0;
  for (int node = 0; node < c.nodes; ++node) {
    std::array<double, kMaxFields> Y{};
    for (int j = 0; j < nf; ++j) Y[j] = initial_fields_[static_cast<std::size_t>(j) * c.nodes + node];
    NodePoint pt;
    pt.x = c.grid.x(node);
    pt.y = c.grid.y(node);
    pt.node = node;
    pt.fields = Y.data();
    pt.controls = zeros.data();
    NodeCoeffs co;
    c.model->evaluate(pt, co, false);
    for (int s = 0; s < c.num_species; ++s) {
      const Mat2& D = co.s[s].D;
      const Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (D + D.transpose()));
      if (!(es.eigenvalues()[0] > 0.0)) {
        throw StabilityError(fmt::format("diffusion tensor of species '{}' is not positive definite at ({}, {})",
                                         c.species_names[s], pt.x, pt.y));
      }
      max_diff = std::max(max_diff, es.eigenvalues()[1]);
      max_adv = std::max(max_adv, co.s[s].Tp.norm());
      if (c.kappa_x[s] == 1) {
        const Relaxation r = relaxation_from_diffusion(D, c.dt, c.layout.d[s], c.lattice.cs2, c.layout.rates[s]);
        const Mat2 P = r.W - 0.5 * Mat2::Identity();
        if (std::fabs(P.determinant()) < 1e-10 * std::max(1.0, r.W.squaredNorm())) {
          c.kappa_x[s] = 0;
          diag_.warnings.push_back(fmt::format("species '{}': kappa_x set to 0 (near-singular K^-1 - I/2)",
                                               c.species_names[s]));
        }
      }
      Vec2 dv;
      pt.t = 0.0;
      if (c.model->deviation(pt, s, dv)) any_deviation_ = true;
    }
  }
  const double h = domain.h;
  diag_.cfl = std::max(max_diff * c.dt / (h * h), max_adv * c.dt / h);
  if (diag_.cfl > cfl_limit_) {
    const std::string msg = fmt::format("CFL number {:.4g} exceeds limit {:.4g} (tau = {}, h = {})", diag_.cfl,
                                        cfl_limit_, c.dt, h);
    if (time.cfl_strict) throw StabilityError(msg);
    diag_.warnings.push_back(msg);
    spdlog::warn("{}", msg);
  }
}

StepState ForwardSolver::initial_state(const ControlVector& f) const {
  const SolverContext& c = ctx_;
  StepState st = c.zero_state();
  for (int node = 0; node < c.nodes; ++node) {
    std::array<double, kMaxFields> Y{};
    std::array<double, kMaxControls> fv{};
    for (int j = 0; j < c.num_fields; ++j) Y[j] = initial_fields_[static_cast<std::size_t>(j) * c.nodes + node];
    for (int p = 0; p < c.num_controls; ++p) fv[p] = f.at(p, 0, node);
    NodePoint pt;
    pt.x = c.grid.x(node);
    pt.y = c.grid.y(node);
    pt.node = node;
    pt.fields = Y.data();
    pt.controls = fv.data();
    NodeCoeffs co;
    c.model->evaluate(pt, co, false);
    for (int s = 0; s < c.num_species; ++s) {
      const Vec9 feq = equilibrium(Y[s], co.s[s].T, co.s[s].C, c.layout.d[s], c.lattice);
      for (int q = 0; q < kQ; ++q) st.pops[(static_cast<std::size_t>(s) * c.nodes + node) * kQ + q] = feq[q];
    }
    for (int o = 0; o < c.num_odes; ++o) st.ode[static_cast<std::size_t>(o) * c.nodes + node] = Y[c.num_species + o];
  }
  return st;
}

void ForwardSolver::step(const ControlVector& f, int n, const StepState& in, StepState& out, Workspace& ws) const {
  forward_step(ctx_, f, n, in, out, ws);
  check_finite(ctx_, out, n + 1);
}

std::vector<double> ForwardSolver::fields(const StepState& s) const {
  std::vector<double> out(static_cast<std::size_t>(ctx_.num_fields) * ctx_.nodes);
  recover_macroscopic(ctx_, s, out.data());
  return out;
}

namespace {

// tau |DV| / |T| over the grid, for species with explicit x/t dependence.
double deviation_ratio(const SolverContext& c, const std::vector<double>& fields, const ControlVector& f, int n) {
  double num = 0.0, den = 0.0;
  for (int node = 0; node < c.nodes; ++node) {
    std::array<double, kMaxFields> Y{};
    std::array<double, kMaxControls> fv{};
    for (int j = 0; j < c.num_fields; ++j) Y[j] = fields[static_cast<std::size_t>(j) * c.nodes + node];
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
    for (int s = 0; s < c.num_species; ++s) {
      Vec2 dv;
      if (!c.model->deviation(pt, s, dv)) continue;
      num = std::max(num, c.dt * dv.norm());
      den = std::max(den, co.s[s].T.norm());
    }
  }
  return den > 0.0 ? num / den : (num > 0.0 ? INFINITY : 0.0);
}

}  // namespace

Trajectory ForwardSolver::run(const ControlVector& f, RecordPolicy policy, const LevelObserver& observer,
                              ForwardDiagnostics* diag) const {
  Trajectory tr(this, f, policy);
  const SolverContext& c = ctx_;
  ForwardDiagnostics local = diag_;
  Workspace ws;
  StepState cur = initial_state(f), next;
  auto record = [&](int n, const StepState& st) {
    const int slot = tr.index_[n];
    if (slot >= 0) {
      StepState& dst = tr.states_[slot];
      dst.pops = st.pops;
      dst.ode = st.ode;
      if (policy.mode == RecordMode::Checkpointed) dst.fprev = st.fprev;
    }
    if (observer) observer(n, st, fields(st));
  };
  record(0, cur);
  bool warned = false;
  for (int n = 0; n < c.steps; ++n) {
    step(tr.controls_, n, cur, next, ws);
    std::swap(cur, next);
    if (any_deviation_ && (n + 1) % deviation_every_ == 0) {
      const double r = deviation_ratio(c, fields(cur), tr.controls_, n + 1);
      local.max_deviation_ratio = std::max(local.max_deviation_ratio, r);
      if (r > 0.01 && !warned) {
        warned = true;
        const std::string msg = fmt::format("explicit-dependence deviation term is {:.3g} of the flux at step {}", r, n + 1);
        local.warnings.push_back(msg);
        spdlog::warn("{}", msg);
      }
    }
    record(n + 1, cur);
  }
  if (diag) *diag = local;
  return tr;
}

StepState ForwardSolver::run_final(const ControlVector& f, const LevelObserver& observer) const {
  Workspace ws;
  StepState cur = initial_state(f), next;
  if (observer) observer(0, cur, fields(cur));
  for (int n = 0; n < ctx_.steps; ++n) {
    step(f, n, cur, next, ws);
    std::swap(cur, next);
    if (observer) observer(n + 1, cur, fields(cur));
  }
  return cur;
}

// ---- trajectory ----

Trajectory::Trajectory(const ForwardSolver* solver, ControlVector controls, RecordPolicy policy)
    : solver_(solver), controls_(std::move(controls)), policy_(policy) {
  levels_ = solver->steps() + 1;
  index_.assign(levels_, -1);
  int count = 0;
  switch (policy.mode) {
    case RecordMode::Full:
      interval_ = 1;
      break;
    case RecordMode::Stride:
      if (policy.stride < 1) throw PreconditionError("record stride must be positive");
      interval_ = policy.stride;
      break;
    case RecordMode::Checkpointed:
      interval_ = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(levels_)))));
      break;
  }
  for (int n = 0; n < levels_; ++n) {
    const bool keep = n % interval_ == 0 || (policy.mode == RecordMode::Stride && n == levels_ - 1);
    if (keep) index_[n] = count++;
  }
  states_.resize(count);
}

bool Trajectory::stored(int n) const {
  if (n < 0 || n >= levels_) return false;
  return policy_.mode == RecordMode::Checkpointed || index_[n] >= 0;
}

const StepState& Trajectory::state(int n) const {
  if (n < 0 || n >= levels_) throw PreconditionError(fmt::format("trajectory level {} out of range", n));
  if (policy_.mode != RecordMode::Checkpointed) {
    if (index_[n] < 0) throw PreconditionError(fmt::format("trajectory level {} was not recorded", n));
    return states_[index_[n]];
  }
  if (index_[n] >= 0) return states_[index_[n]];
  const int start = (n / interval_) * interval_;
  if (seg_start_ != start) {
    const int end = std::min(start + interval_ - 1, levels_ - 1);
    segment_.assign(end - start + 1, StepState{});
    segment_[0] = states_[index_[start]];
    Workspace ws;
    for (int k = start; k < end; ++k) solver_->step(controls_, k, segment_[k - start], segment_[k - start + 1], ws);
    seg_start_ = start;
  }
  return segment_[n - start];
}

std::vector<double> Trajectory::fields(int n) const { return solver_->fields(state(n)); }

}  // namespace chemolb
