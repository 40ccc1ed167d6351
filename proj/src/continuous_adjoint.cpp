#include <fmt/format.h>

#include "chemolb/errors.hpp"
#include "chemolb/objective.hpp"

namespace chemolb {

namespace {

void require_constant(const Expression& e, const std::string& species, const std::string& what) {
  if (!e.is_constant()) {
    throw UnsupportedModelError(fmt::format(
        "continuous adjoint route: species '{}' has a non-constant {} ({}); only constant tensors are supported",
        species, what, e.to_string()));
  }
}

// Coefficients of the time-reversed adjoint system. Level n' of the adjoint
// run corresponds to primal level N - n'.
class AdjointSystem : public NodeModel {
 public:
  AdjointSystem(const ProblemModel& model, const ObjectiveSpec& spec, std::shared_ptr<const CompiledModel> primal,
                const std::vector<std::vector<double>>& primal_fields, const ControlVector& f)
      : primal_(std::move(primal)), fields_(primal_fields), f_(f), spec_(spec), steps_(model.time.steps) {
    const int S = model.num_species();
    nodes_ = model.domain.nx * model.domain.ny;
    layout_.num_species = S;
    layout_.num_fields = S;
    layout_.num_controls = 0;
    for (const auto& s : model.species) layout_.field_names.push_back(s.name);
    layout_.cross_partner.assign(S, {});
    cross_.assign(S, {});
    for (int j = 0; j < S; ++j) {
      const auto& sp = model.species[j];
      layout_.d.push_back(sp.d);
      layout_.rates.push_back(sp.rates);
      layout_.state_dependent_diffusion.push_back(false);
      Mat2 D;
      D << sp.diffusion[0].constant_value(), sp.diffusion[1].constant_value(), sp.diffusion[1].constant_value(),
          sp.diffusion[2].constant_value();
      D_.push_back(D.transpose());
      Vec2 tp(sp.flux[0].derivative(sp.name).constant_value(), sp.flux[1].derivative(sp.name).constant_value());
      Tp_.push_back(-tp);
      layout_.has_flux.push_back(tp.squaredNorm() > 0.0);
      for (const auto& ct : sp.cross) {
        const int k = model.field_index(ct.partner);
        Mat2 A;
        A << ct.tensor[0].constant_value(), ct.tensor[1].constant_value(), ct.tensor[2].constant_value(),
            ct.tensor[3].constant_value();
        // adjoint species k couples to the gradient of adjoint species j through A^T
        layout_.cross_partner[k].push_back(j);
        cross_[k].push_back(A.transpose());
      }
    }
  }

  const ModelLayout& layout() const override { return layout_; }

  void evaluate(const NodePoint& p, NodeCoeffs& out, bool partials) const override {
    if (partials) throw InternalError("adjoint system has no declared partials");
    const int S = layout_.num_species;
    const int n = steps_ - p.level;
    const auto& y = fields_[n];
    std::array<double, kMaxFields> Y{};
    std::array<double, kMaxControls> fv{};
    for (int j = 0; j < primal_->layout().num_fields; ++j) Y[j] = y[static_cast<std::size_t>(j) * nodes_ + p.node];
    for (int q = 0; q < primal_->layout().num_controls; ++q) fv[q] = f_.at(q, n, p.node);
    NodePoint pp = p;
    pp.t = p.t;  // unused by constant tensors
    pp.level = n;
    pp.fields = Y.data();
    pp.controls = fv.data();
    NodeCoeffs pc;
    primal_->evaluate(pp, pc, true);
    for (int k = 0; k < S; ++k) {
      SpeciesCoeffs& c = out.s[k];
      c.D = D_[k];
      c.Tp = Tp_[k];
      c.T = Tp_[k] * p.fields[k];
      c.Tpp.setZero();
      c.Cp = Tp_[k] * Tp_[k].transpose();
      c.C = c.Cp * p.fields[k];
      double phi = spec_.b[k] * (Y[k] - spec_.running_target[k].at(n, p.node, nodes_));
      for (int j = 0; j < S; ++j) phi += pc.s[j].dPhi[k] * p.fields[j];
      c.Phi = phi;
      for (std::size_t m = 0; m < cross_[k].size(); ++m) c.Dk[m] = cross_[k][m];
    }
  }

 private:
  std::shared_ptr<const CompiledModel> primal_;
  const std::vector<std::vector<double>>& fields_;
  const ControlVector& f_;
  const ObjectiveSpec& spec_;
  int steps_ = 0;
  int nodes_ = 0;
  ModelLayout layout_;
  std::vector<Mat2> D_;
  std::vector<Vec2> Tp_;
  std::vector<std::vector<Mat2>> cross_;
};

}  // namespace

GradientResult assemble_gradient_continuous(const ProblemModel& model, const ObjectiveSpec& spec,
                                            const ControlVector& f) {
  spec.validate();
  if (!model.odes.empty()) throw UnsupportedModelError("continuous adjoint route: ODE fields are not supported");
  for (const auto& s : model.species) {
    for (const auto& e : s.diffusion) require_constant(e, s.name, "diffusion tensor");
    for (const auto& e : s.flux) require_constant(e.derivative(s.name), s.name, "flux Jacobian");
    for (const auto& ct : s.cross) {
      for (const auto& e : ct.tensor) require_constant(e, s.name, "cross-diffusion tensor");
    }
  }
  auto primal = std::make_shared<CompiledModel>(model);
  const ForwardSolver solver(primal, model.domain, model.time, initial_fields(model));
  const SolverContext& c = solver.context();
  const int N = c.nodes;
  const int steps = c.steps;

  std::vector<std::vector<double>> fields(steps + 1);
  CostAccumulator acc(solver, spec);
  solver.run_final(f, [&](int n, const StepState&, const std::vector<double>& y) {
    fields[n] = y;
    acc.observe(n, y);
  });

  // Final condition a (y(T) - y_f).
  const int S = c.num_species;
  std::vector<double> q0(static_cast<std::size_t>(S) * N);
  for (int k = 0; k < S; ++k) {
    for (int i = 0; i < N; ++i) {
      q0[static_cast<std::size_t>(k) * N + i] =
          spec.a[k] * (fields[steps][static_cast<std::size_t>(k) * N + i] - spec.final_target[k].at(0, i, N));
    }
  }
  auto adj = std::make_shared<AdjointSystem>(model, spec, primal, fields, f);
  TimeSpec ts = model.time;
  ts.cfl_strict = false;
  const ForwardSolver adjoint_solver(adj, model.domain, ts, q0);
  std::vector<std::vector<double>> q(steps + 1);
  adjoint_solver.run_final(ControlVector{}, [&](int m, const StepState&, const std::vector<double>& y) {
    q[steps - m] = y;
  });

  GradientResult r;
  r.J = acc.state_cost() + regularization_cost(solver, spec, f);
  r.gradient = regularization_gradient(solver, spec, f);
  const double h2 = c.grid.h * c.grid.h;
  for (int n = 0; n <= steps; ++n) {
    const double w = c.dt * quadrature_weight(n, steps) * h2;
    for (int i = 0; i < N; ++i) {
      std::array<double, kMaxFields> Y{};
      std::array<double, kMaxControls> fv{};
      for (int j = 0; j < c.num_fields; ++j) Y[j] = fields[n][static_cast<std::size_t>(j) * N + i];
      for (int p = 0; p < c.num_controls; ++p) fv[p] = f.at(p, n, i);
      NodePoint pt;
      pt.x = c.grid.x(i);
      pt.y = c.grid.y(i);
      pt.t = c.time(n);
      pt.level = n;
      pt.node = i;
      pt.fields = Y.data();
      pt.controls = fv.data();
      NodeCoeffs co;
      primal->evaluate(pt, co, true);
      for (int p = 0; p < c.num_controls; ++p) {
        double g = 0.0;
        for (int k = 0; k < S; ++k) g += q[n][static_cast<std::size_t>(k) * N + i] * co.s[k].dPhi_df[p];
        ControlData& d = r.gradient.slots[p];
        d.values[d.offset(n, i)] += w * g;
      }
    }
  }
  return r;
}

}  // namespace chemolb
