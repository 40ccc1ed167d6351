#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chemolb/config.hpp"
#include "chemolb/expression.hpp"
#include "chemolb/lattice.hpp"

namespace chemolb {

inline constexpr int kMaxSpecies = 4;
inline constexpr int kMaxOde = 2;
inline constexpr int kMaxFields = kMaxSpecies + kMaxOde;
inline constexpr int kMaxControls = 8;
inline constexpr int kMaxCross = 4;

using expr::Expression;

enum class Support { SpaceTime, Space, Time, Constant };

Support parse_support(const std::string& s);
std::string support_name(Support s);

struct CrossTerm {
  std::string partner;
  std::array<Expression, 4> tensor;  // xx, xy, yx, yy
};

struct SpeciesSpec {
  std::string name;
  double d = 1.0;
  std::array<Expression, 3> diffusion;  // xx, xy, yy
  std::array<Expression, 2> flux;
  std::array<Expression, 3> tensor_c;   // xx, xy, yy
  bool tensor_c_given = false;
  Expression source;
  Expression initial;
  std::vector<CrossTerm> cross;
  std::array<double, 7> rates{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};  // s0..s6
};

struct OdeSpec {
  std::string name;
  Expression source;
  Expression initial;
};

struct ControlSlot {
  std::string name;
  Support support = Support::Space;
  double lower = -1e300;
  double upper = 1e300;
  Expression initial;
  Expression reference;
  std::optional<Expression> truth;
  bool active = true;
};

struct DomainSpec {
  int nx = 32;
  int ny = 32;
  double h = 1.0;
};

struct TimeSpec {
  double dt = 1.0;
  int steps = 10;
  int kappa_x = 1;
  double cfl_limit = 1.0;
  bool cfl_strict = false;
};

// Declarative coupled system. Parameters are already substituted into
// every expression.
struct ProblemModel {
  std::string name = "custom";
  std::vector<SpeciesSpec> species;
  std::vector<OdeSpec> odes;
  std::vector<ControlSlot> controls;
  DomainSpec domain;
  TimeSpec time;
  std::map<std::string, double> params;

  int num_species() const { return static_cast<int>(species.size()); }
  int num_fields() const { return static_cast<int>(species.size() + odes.size()); }
  int num_controls() const { return static_cast<int>(controls.size()); }
  std::vector<std::string> field_names() const;
  std::vector<std::string> control_names() const;
  int field_index(const std::string& name) const;
  int control_index(const std::string& name) const;
  double final_time() const { return time.dt * time.steps; }
  // Copy with every species source and ODE right-hand side set to zero.
  ProblemModel without_sources() const;
};

ProblemModel load_model(const ConfigDocument& doc);
ProblemModel load_model_file(const std::string& path);
ConfigDocument serialize_model(const ProblemModel& model);

// Built-in configurations; chi selects the chemotactic tensor form
// ("linear": X u I, "rational": X u / (1 + zeta^2) I).
ConfigDocument builtin_config(const std::string& name, const std::string& chi = "linear");
ProblemModel builtin_crime();
ProblemModel builtin_attraction_repulsion();
ProblemModel builtin_two_species();
ProblemModel builtin_tumor();

// ---- per-node evaluation interface used by the solvers ----

struct ModelLayout {
  int num_species = 0;
  int num_fields = 0;
  int num_controls = 0;
  std::vector<std::string> field_names;
  std::vector<std::string> control_names;
  std::vector<std::vector<int>> cross_partner;  // per species: field indices
  std::vector<double> d;
  std::vector<std::array<double, 7>> rates;
  std::vector<bool> state_dependent_diffusion;
  std::vector<bool> has_flux;
};

struct NodePoint {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;
  int level = 0;
  int node = 0;
  const double* fields = nullptr;    // num_fields values
  const double* controls = nullptr;  // num_controls values
};

struct SpeciesCoeffs {
  Mat2 D;
  Vec2 T, Tp, Tpp;
  Mat2 C, Cp;
  double Phi = 0.0;
  std::array<Mat2, kMaxCross> Dk;
  // partial derivatives (filled when requested)
  std::array<Mat2, kMaxFields> dD;
  std::array<std::array<Mat2, kMaxFields>, kMaxCross> dDk;
  std::array<double, kMaxFields> dPhi;
  std::array<double, kMaxControls> dPhi_df;
};

struct OdeCoeffs {
  double R = 0.0;
  std::array<double, kMaxFields> dR;
  std::array<double, kMaxControls> dR_df;
};

struct NodeCoeffs {
  std::array<SpeciesCoeffs, kMaxSpecies> s;
  std::array<OdeCoeffs, kMaxOde> o;
};

class NodeModel {
 public:
  virtual ~NodeModel() = default;
  virtual const ModelLayout& layout() const = 0;
  virtual void evaluate(const NodePoint& p, NodeCoeffs& out, bool partials) const = 0;
  // Explicit-dependence deviation term (dT/dt + div_x C - (div_x T) T') for
  // species s; returns false when the flux has no explicit x/t dependence.
  virtual bool deviation(const NodePoint& p, int s, Vec2& dv) const {
    (void)p;
    (void)s;
    (void)dv;
    return false;
  }
};

// Compiled evaluator for a ProblemModel.
class CompiledModel : public NodeModel {
 public:
  explicit CompiledModel(const ProblemModel& model);
  const ModelLayout& layout() const override { return layout_; }
  void evaluate(const NodePoint& p, NodeCoeffs& out, bool partials) const override;
  bool deviation(const NodePoint& p, int s, Vec2& dv) const override;

 private:
  using P = expr::Program;
  struct SpeciesProg {
    std::array<P, 3> D;
    std::vector<std::array<P, 3>> dD;
    std::array<P, 2> T, Tp, Tpp;
    std::array<P, 3> C, Cp;
    P Phi;
    std::vector<P> dPhi, dPhi_df;
    std::vector<std::array<P, 4>> Dk;
    std::vector<std::vector<std::array<P, 4>>> dDk;
    bool explicit_flux = false;
    std::array<P, 2> dTdt, dTdx;  // dTdx = (dTx/dx, dTy/dy)
    std::array<P, 4> dCdx;        // dCxx/dx, dCxy/dy, dCxy/dx, dCyy/dy
  };
  struct OdeProg {
    P R;
    std::vector<P> dR, dR_df;
  };
  ModelLayout layout_;
  std::vector<SpeciesProg> sp_;
  std::vector<OdeProg> op_;
};

// Tensor C used by the solver: the given expression, or theta * (T' (x) T').
std::array<Expression, 3> effective_tensor_c(const SpeciesSpec& s);

// ---- controls ----

struct ControlData {
  std::string name;
  Support support = Support::Space;
  int nodes = 0;
  int levels = 0;
  double lower = -1e300;
  double upper = 1e300;
  std::vector<double> values;

  std::size_t offset(int level, int node) const {
    switch (support) {
      case Support::SpaceTime: return static_cast<std::size_t>(level) * nodes + node;
      case Support::Space: return static_cast<std::size_t>(node);
      case Support::Time: return static_cast<std::size_t>(level);
      case Support::Constant: return 0;
    }
    return 0;
  }
  double at(int level, int node) const { return values[offset(level, node)]; }
};

// Discretized controls; also used for gradients and references.
struct ControlVector {
  std::vector<ControlData> slots;

  double at(int slot, int level, int node) const { return slots[slot].at(level, node); }
  std::size_t size() const;
  ControlVector zeros_like() const;
  double dot(const ControlVector& o) const;
  double norm2() const;
  double norm_inf() const;
  void axpy(double a, const ControlVector& x);
  void scale(double a);
  std::vector<double> flatten() const;
  void assign(const std::vector<double>& flat);
};

enum class ControlSource { Initial, Reference, Truth };

// Evaluates the slot expressions on the grid and time levels of the model.
ControlVector make_controls(const ProblemModel& model, ControlSource src);
ControlVector project_controls(const ControlVector& f);

}  // namespace chemolb
