#include "chemolb/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <fmt/format.h>
#include <random>
#include <sstream>

#include "chemolb/errors.hpp"

namespace chemolb {

Support parse_support(const std::string& s) {
  if (s == "space_time") return Support::SpaceTime;
  if (s == "space") return Support::Space;
  if (s == "time") return Support::Time;
  if (s == "constant") return Support::Constant;
  throw ParameterError("unknown control support '" + s + "' (space_time, space, time, constant)");
}

std::string support_name(Support s) {
  switch (s) {
    case Support::SpaceTime: return "space_time";
    case Support::Space: return "space";
    case Support::Time: return "time";
    case Support::Constant: return "constant";
  }
  return "space";
}

std::vector<std::string> ProblemModel::field_names() const {
  std::vector<std::string> out;
  for (const auto& s : species) out.push_back(s.name);
  for (const auto& o : odes) out.push_back(o.name);
  return out;
}

std::vector<std::string> ProblemModel::control_names() const {
  std::vector<std::string> out;
  for (const auto& c : controls) out.push_back(c.name);
  return out;
}

int ProblemModel::field_index(const std::string& name) const {
  const auto names = field_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int ProblemModel::control_index(const std::string& name) const {
  for (std::size_t i = 0; i < controls.size(); ++i) {
    if (controls[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

ProblemModel ProblemModel::without_sources() const {
  ProblemModel m = *this;
  for (auto& s : m.species) s.source = Expression(0.0);
  for (auto& o : m.odes) o.source = Expression(0.0);
  return m;
}

std::array<Expression, 3> effective_tensor_c(const SpeciesSpec& s) {
  if (s.tensor_c_given) return s.tensor_c;
  const Expression th = Expression::variable(s.name);
  const Expression tx = s.flux[0].derivative(s.name);
  const Expression ty = s.flux[1].derivative(s.name);
  return {th * tx * tx, th * tx * ty, th * ty * ty};
}

namespace {

std::string num(double v) { return fmt::format("{}", v); }

class ModelReader {
 public:
  explicit ModelReader(const ConfigDocument& doc) : doc_(doc) {}

  ProblemModel read() {
    ProblemModel m;
    m.name = doc_.get_string("model", "name", doc_.get_string("model", "builtin", "custom"));
    doc_.mark_used("model", "builtin");
    doc_.mark_used("model", "chi");
    for (const auto& k : doc_.keys("params")) m.params[k] = doc_.get_double("params", k);

    m.domain.nx = doc_.get_int("domain", "nx", 32);
    m.domain.ny = doc_.get_int("domain", "ny", 32);
    m.domain.h = doc_.get_double("domain", "h", 1.0);
    if (m.domain.nx < 3) throw ConfigError("domain", "nx", "need at least 3 nodes");
    if (m.domain.ny < 3) throw ConfigError("domain", "ny", "need at least 3 nodes");
    if (!(m.domain.h > 0)) throw ConfigError("domain", "h", "grid spacing must be positive");

    m.time.dt = doc_.get_double("time", "dt", 1.0);
    m.time.steps = doc_.get_int("time", "steps", 10);
    m.time.kappa_x = doc_.get_int("time", "kappa_x", 1);
    m.time.cfl_limit = doc_.get_double("time", "cfl_limit", 1.0);
    m.time.cfl_strict = doc_.get_bool("time", "cfl_strict", false);
    if (!(m.time.dt > 0)) throw ConfigError("time", "dt", "time step must be positive");
    if (m.time.steps < 1) throw ConfigError("time", "steps", "need at least one step");
    if (m.time.kappa_x != 0 && m.time.kappa_x != 1) throw ConfigError("time", "kappa_x", "must be 0 or 1");

    const auto species = doc_.subsections("species");
    const auto odes = doc_.subsections("ode");
    const auto controls = doc_.subsections("control");
    if (species.empty()) throw ConfigError("species", "", "model needs at least one species");
    if (static_cast<int>(species.size()) > kMaxSpecies)
      throw ConfigError("species", "", fmt::format("at most {} species supported", kMaxSpecies));
    if (static_cast<int>(odes.size()) > kMaxOde)
      throw ConfigError("ode", "", fmt::format("at most {} ODE species supported", kMaxOde));
    if (static_cast<int>(controls.size()) > kMaxControls)
      throw ConfigError("control", "", fmt::format("at most {} controls supported", kMaxControls));

    for (const auto& n : species) fields_.push_back(n);
    for (const auto& n : odes) fields_.push_back(n);
    for (const auto& n : controls) controls_.push_back(n);
    check_names(m);
    params_ = m.params;
    // domain extents are available to expressions unless overridden
    params_.emplace("Lx", m.domain.nx * m.domain.h);
    params_.emplace("pi", 3.14159265358979323846);
    params_.emplace("Ly", m.domain.ny * m.domain.h);

    for (const auto& n : species) m.species.push_back(read_species(n));
    for (const auto& n : odes) {
      const std::string sec = "ode." + n;
      OdeSpec o;
      o.name = n;
      o.source = expression(sec, "source", "0", state_and_controls());
      o.initial = expression(sec, "initial", "0", {"x", "y"});
      m.odes.push_back(o);
    }
    for (const auto& n : controls) m.controls.push_back(read_control(n, m));
    for (const auto& c : m.controls) {
      bool used = false;
      for (const auto& sp : m.species) used = used || sp.source.depends_on(c.name);
      for (const auto& o : m.odes) used = used || o.source.depends_on(c.name);
      if (!used) throw ConfigError("control." + c.name, "", "control is not referenced by any source");
    }
    return m;
  }

 private:
  void check_names(const ProblemModel& m) {
    std::set<std::string> seen = {"x", "y", "t"};
    auto add = [&](const std::string& sec, const std::string& n) {
      if (!seen.insert(n).second) throw ConfigError(sec, "", "name '" + n + "' clashes with another name");
      if (m.params.count(n)) throw ConfigError(sec, "", "name '" + n + "' clashes with a parameter");
    };
    for (const auto& n : doc_.subsections("species")) add("species." + n, n);
    for (const auto& n : doc_.subsections("ode")) add("ode." + n, n);
    for (const auto& n : doc_.subsections("control")) add("control." + n, n);
  }

  std::vector<std::string> state_vars() const {
    std::vector<std::string> v = {"x", "y", "t"};
    v.insert(v.end(), fields_.begin(), fields_.end());
    return v;
  }
  std::vector<std::string> state_and_controls() const {
    auto v = state_vars();
    v.insert(v.end(), controls_.begin(), controls_.end());
    return v;
  }

  Expression expression(const std::string& sec, const std::string& key, const std::string& dflt,
                        const std::vector<std::string>& allowed) {
    const std::string text = doc_.get_string(sec, key, dflt);
    Expression e;
    try {
      e = Expression::parse(text).substitute(params_);
    } catch (const ParameterError& err) {
      throw ConfigError(sec, key, err.what());
    }
    for (const auto& v : e.variables()) {
      if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
        throw ConfigError(sec, key, "variable '" + v + "' is not defined here");
      }
    }
    return e;
  }

  SpeciesSpec read_species(const std::string& n) {
    const std::string sec = "species." + n;
    SpeciesSpec s;
    s.name = n;
    s.d = doc_.get_double(sec, "d", 1.0);
    if (!(s.d > 0)) throw ConfigError(sec, "d", "equilibrium stress parameter must be positive");
    const auto sv = state_vars();
    if (doc_.has(sec, "diffusion")) {
      const Expression d = expression(sec, "diffusion", "1", sv);
      s.diffusion = {d, Expression(0.0), d};
    } else {
      s.diffusion = {expression(sec, "diffusion_xx", "1", sv), expression(sec, "diffusion_xy", "0", sv),
                     expression(sec, "diffusion_yy", "1", sv)};
    }
    const std::vector<std::string> own = {"x", "y", "t", n};
    s.flux = {expression(sec, "flux_x", "0", own), expression(sec, "flux_y", "0", own)};
    const bool cx = doc_.has(sec, "tensor_c_xx"), cxy = doc_.has(sec, "tensor_c_xy"),
               cy = doc_.has(sec, "tensor_c_yy");
    if (cx || cxy || cy) {
      if (!(cx && cxy && cy)) throw ConfigError(sec, "tensor_c_xx", "give all of tensor_c_xx, tensor_c_xy, tensor_c_yy");
      s.tensor_c_given = true;
      s.tensor_c = {expression(sec, "tensor_c_xx", "0", own), expression(sec, "tensor_c_xy", "0", own),
                    expression(sec, "tensor_c_yy", "0", own)};
    }
    s.source = expression(sec, "source", "0", state_and_controls());
    s.initial = expression(sec, "initial", "0", {"x", "y"});
    if (auto r = doc_.raw(sec, "rates")) {
      std::stringstream ss(*r);
      std::string tok;
      int i = 0;
      while (std::getline(ss, tok, ',')) {
        if (i >= 7) throw ConfigError(sec, "rates", "expected 7 comma-separated rates s0..s6");
        try {
          s.rates[i++] = std::stod(tok);
        } catch (const std::exception&) {
          throw ConfigError(sec, "rates", "bad number '" + tok + "'");
        }
      }
      if (i != 7) throw ConfigError(sec, "rates", "expected 7 comma-separated rates s0..s6");
      for (double v : s.rates) {
        if (!(v > 0.0 && v < 2.0)) throw ConfigError(sec, "rates", "relaxation rates must lie in (0, 2)");
      }
    }
    // cross.<partner> (isotropic) or cross.<partner>.<xx|xy|yx|yy>
    std::map<std::string, CrossTerm> cross;
    std::vector<std::string> order;
    for (const auto& key : doc_.keys(sec)) {
      if (key.rfind("cross.", 0) != 0) continue;
      std::string rest = key.substr(6);
      std::string comp;
      if (auto dot = rest.find('.'); dot != std::string::npos) {
        comp = rest.substr(dot + 1);
        rest = rest.substr(0, dot);
      }
      if (std::find(fields_.begin(), fields_.end(), rest) == fields_.end())
        throw ConfigError(sec, key, "cross-diffusion partner '" + rest + "' is not a field");
      if (rest == n) throw ConfigError(sec, key, "cross-diffusion partner must differ from the species");
      if (!cross.count(rest)) {
        order.push_back(rest);
        cross[rest].partner = rest;
        cross[rest].tensor = {Expression(0.0), Expression(0.0), Expression(0.0), Expression(0.0)};
      }
      const Expression e = expression(sec, key, "0", sv);
      auto& t = cross[rest].tensor;
      if (comp.empty()) {
        t[0] = e;
        t[3] = e;
      } else if (comp == "xx") {
        t[0] = e;
      } else if (comp == "xy") {
        t[1] = e;
      } else if (comp == "yx") {
        t[2] = e;
      } else if (comp == "yy") {
        t[3] = e;
      } else {
        throw ConfigError(sec, key, "tensor component must be xx, xy, yx or yy");
      }
    }
    if (static_cast<int>(order.size()) > kMaxCross)
      throw ConfigError(sec, "cross", fmt::format("at most {} cross-diffusion terms", kMaxCross));
    for (const auto& p : order) s.cross.push_back(cross[p]);
    return s;
  }

  ControlSlot read_control(const std::string& n, const ProblemModel& m) {
    const std::string sec = "control." + n;
    ControlSlot c;
    c.name = n;
    try {
      c.support = parse_support(doc_.get_string(sec, "support", "space"));
    } catch (const ParameterError& e) {
      throw ConfigError(sec, "support", e.what());
    }
    c.lower = doc_.get_double(sec, "lower", -1e300);
    c.upper = doc_.get_double(sec, "upper", 1e300);
    if (!(c.lower <= c.upper)) throw ConfigError(sec, "lower", "lower bound exceeds upper bound");
    const std::vector<std::string> xyt = {"x", "y", "t"};
    c.initial = expression(sec, "initial", "0", xyt);
    c.reference = expression(sec, "reference", "0", xyt);
    if (doc_.has(sec, "truth")) c.truth = expression(sec, "truth", "0", xyt);
    c.active = doc_.get_bool(sec, "active", true);
    bool used = false;
    for (const auto& s : m.species) used = used || s.source.depends_on(n);
    for (const auto& o : m.odes) used = used || o.source.depends_on(n);
    if (!used) throw ConfigError(sec, "", "control '" + n + "' does not enter any source term");
    return c;
  }

  const ConfigDocument& doc_;
  std::vector<std::string> fields_;
  std::vector<std::string> controls_;
  std::map<std::string, double> params_;
};

// Finite-difference probes of the declared derivatives.
void probe_model(const ProblemModel& m) {
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> field(0.2, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto fnames = m.field_names();
  const auto cnames = m.control_names();
  std::vector<std::string> slots = {"x", "y", "t"};
  slots.insert(slots.end(), fnames.begin(), fnames.end());
  slots.insert(slots.end(), cnames.begin(), cnames.end());
  const double lx = m.domain.nx * m.domain.h, ly = m.domain.ny * m.domain.h;

  auto check = [](const std::string& sec, const std::string& what, double an, double fd, double scale,
                  const std::vector<double>& env) {
    if (std::fabs(an - fd) > 1e-6 * std::max({std::fabs(an), scale, 1.0})) {
      std::string pt;
      for (double v : env) pt += fmt::format("{}{:.6g}", pt.empty() ? "" : ",", v);
      throw ConfigError(sec, what,
                        fmt::format("derivative-consistency failure at probe ({}): declared {:.10g}, "
                                    "finite difference {:.10g}, mismatch {:.3g}",
                                    pt, an, fd, std::fabs(an - fd)));
    }
  };

  for (int probe = 0; probe < 16; ++probe) {
    std::vector<double> env(slots.size());
    env[0] = unit(rng) * lx;
    env[1] = unit(rng) * ly;
    env[2] = unit(rng) * m.final_time();
    for (std::size_t f = 0; f < fnames.size(); ++f) env[3 + f] = field(rng);
    for (std::size_t c = 0; c < cnames.size(); ++c) {
      const double lo = std::max(m.controls[c].lower, -2.0);
      const double hi = std::min(m.controls[c].upper, 2.0);
      env[3 + fnames.size() + c] = lo + (hi - lo) * unit(rng);
    }
    auto eval = [&](const Expression& e, const std::vector<double>& x) {
      return expr::Program::compile(e, slots).eval(x.data());
    };
    auto fd = [&](const Expression& e, int slot) {
      std::vector<double> xp = env, xm = env;
      const double hh = 1e-6 * std::max(1.0, std::fabs(env[slot]));
      xp[slot] += hh;
      xm[slot] -= hh;
      return (eval(e, xp) - eval(e, xm)) / (2.0 * hh);
    };
    for (int si = 0; si < m.num_species(); ++si) {
      const auto& s = m.species[si];
      const std::string sec = "species." + s.name;
      const int own = 3 + si;
      const auto C = effective_tensor_c(s);
      Vec2 tp;
      for (int a = 0; a < 2; ++a) {
        const Expression d = s.flux[a].derivative(s.name);
        tp[a] = eval(d, env);
        check(sec, a == 0 ? "flux_x" : "flux_y", tp[a], fd(s.flux[a], own), std::fabs(eval(s.flux[a], env)), env);
      }
      const double want[3] = {tp[0] * tp[0], tp[0] * tp[1], tp[1] * tp[1]};
      const char* ckeys[3] = {"tensor_c_xx", "tensor_c_xy", "tensor_c_yy"};
      for (int a = 0; a < 3; ++a) check(sec, ckeys[a], want[a], fd(C[a], own), std::fabs(eval(C[a], env)), env);
      for (std::size_t f = 0; f < fnames.size(); ++f) {
        check(sec, "source", eval(s.source.derivative(fnames[f]), env), fd(s.source, 3 + static_cast<int>(f)),
              std::fabs(eval(s.source, env)), env);
      }
      for (std::size_t c = 0; c < cnames.size(); ++c) {
        const int slot = 3 + static_cast<int>(fnames.size() + c);
        check(sec, "source", eval(s.source.derivative(cnames[c]), env), fd(s.source, slot),
              std::fabs(eval(s.source, env)), env);
      }
      Mat2 D;
      D << eval(s.diffusion[0], env), eval(s.diffusion[1], env), eval(s.diffusion[1], env), eval(s.diffusion[2], env);
      if (!(D(0, 0) > 0.0 && D.determinant() > 0.0)) {
        throw ConfigError(sec, "diffusion", "diffusion tensor is not positive definite at a probe point");
      }
    }
  }
}

}  // namespace

ProblemModel load_model(const ConfigDocument& user) {
  ConfigDocument doc = user;
  if (auto b = user.raw("model", "builtin")) {
    const std::string chi = user.get_string("model", "chi", "linear");
    try {
      doc = builtin_config(*b, chi);
    } catch (const ParameterError& e) {
      throw ConfigError("model", "builtin", e.what());
    }
    for (const auto& s : user.sections()) {
      for (const auto& [k, v] : s.entries) doc.set(s.name, k, v);
    }
  }
  ProblemModel m = ModelReader(doc).read();
  doc.reject_unused({"model", "params", "domain", "time", "species", "ode", "control"});
  probe_model(m);
  return m;
}

ProblemModel load_model_file(const std::string& path) { return load_model(ConfigDocument::load_file(path)); }

ConfigDocument serialize_model(const ProblemModel& m) {
  ConfigDocument d;
  d.set("model", "name", m.name);
  d.set("domain", "nx", std::to_string(m.domain.nx));
  d.set("domain", "ny", std::to_string(m.domain.ny));
  d.set("domain", "h", num(m.domain.h));
  d.set("time", "dt", num(m.time.dt));
  d.set("time", "steps", std::to_string(m.time.steps));
  d.set("time", "kappa_x", std::to_string(m.time.kappa_x));
  d.set("time", "cfl_limit", num(m.time.cfl_limit));
  d.set("time", "cfl_strict", m.time.cfl_strict ? "true" : "false");
  for (const auto& s : m.species) {
    const std::string sec = "species." + s.name;
    d.set(sec, "d", num(s.d));
    d.set(sec, "diffusion_xx", s.diffusion[0].to_string());
    d.set(sec, "diffusion_xy", s.diffusion[1].to_string());
    d.set(sec, "diffusion_yy", s.diffusion[2].to_string());
    d.set(sec, "flux_x", s.flux[0].to_string());
    d.set(sec, "flux_y", s.flux[1].to_string());
    if (s.tensor_c_given) {
      d.set(sec, "tensor_c_xx", s.tensor_c[0].to_string());
      d.set(sec, "tensor_c_xy", s.tensor_c[1].to_string());
      d.set(sec, "tensor_c_yy", s.tensor_c[2].to_string());
    }
    d.set(sec, "source", s.source.to_string());
    d.set(sec, "initial", s.initial.to_string());
    std::string rates;
    for (double r : s.rates) rates += (rates.empty() ? "" : ", ") + num(r);
    d.set(sec, "rates", rates);
    for (const auto& c : s.cross) {
      static const char* comp[4] = {"xx", "xy", "yx", "yy"};
      for (int k = 0; k < 4; ++k) d.set(sec, "cross." + c.partner + "." + comp[k], c.tensor[k].to_string());
    }
  }
  for (const auto& o : m.odes) {
    d.set("ode." + o.name, "source", o.source.to_string());
    d.set("ode." + o.name, "initial", o.initial.to_string());
  }
  for (const auto& c : m.controls) {
    const std::string sec = "control." + c.name;
    d.set(sec, "support", support_name(c.support));
    d.set(sec, "lower", num(c.lower));
    d.set(sec, "upper", num(c.upper));
    d.set(sec, "initial", c.initial.to_string());
    d.set(sec, "reference", c.reference.to_string());
    if (c.truth) d.set(sec, "truth", c.truth->to_string());
    d.set(sec, "active", c.active ? "true" : "false");
  }
  return d;
}

// ---- compiled evaluation ----

CompiledModel::CompiledModel(const ProblemModel& m) {
  layout_.num_species = m.num_species();
  layout_.num_fields = m.num_fields();
  layout_.num_controls = m.num_controls();
  layout_.field_names = m.field_names();
  layout_.control_names = m.control_names();
  std::vector<std::string> slots = {"x", "y", "t"};
  slots.insert(slots.end(), layout_.field_names.begin(), layout_.field_names.end());
  slots.insert(slots.end(), layout_.control_names.begin(), layout_.control_names.end());
  auto C = [&](const Expression& e) { return P::compile(e, slots); };
  const auto& fn = layout_.field_names;
  const auto& cn = layout_.control_names;

  for (const auto& s : m.species) {
    SpeciesProg p;
    bool state_dep = false;
    for (int a = 0; a < 3; ++a) p.D[a] = C(s.diffusion[a]);
    p.dD.resize(fn.size());
    for (std::size_t j = 0; j < fn.size(); ++j) {
      for (int a = 0; a < 3; ++a) {
        const Expression d = s.diffusion[a].derivative(fn[j]);
        state_dep = state_dep || !d.is_constant() || d.constant_value() != 0.0;
        p.dD[j][a] = C(d);
      }
    }
    bool flux = false;
    for (int a = 0; a < 2; ++a) {
      const Expression tp = s.flux[a].derivative(s.name);
      p.T[a] = C(s.flux[a]);
      p.Tp[a] = C(tp);
      p.Tpp[a] = C(tp.derivative(s.name));
      flux = flux || !(s.flux[a].is_constant() && s.flux[a].constant_value() == 0.0);
    }
    const auto tc = effective_tensor_c(s);
    for (int a = 0; a < 3; ++a) {
      p.C[a] = C(tc[a]);
      p.Cp[a] = C(tc[a].derivative(s.name));
    }
    p.Phi = C(s.source);
    for (const auto& f : fn) p.dPhi.push_back(C(s.source.derivative(f)));
    for (const auto& c : cn) p.dPhi_df.push_back(C(s.source.derivative(c)));
    std::vector<int> partners;
    for (const auto& ct : s.cross) {
      partners.push_back(m.field_index(ct.partner));
      std::array<P, 4> t;
      for (int a = 0; a < 4; ++a) t[a] = C(ct.tensor[a]);
      p.Dk.push_back(t);
      std::vector<std::array<P, 4>> dt(fn.size());
      for (std::size_t j = 0; j < fn.size(); ++j) {
        for (int a = 0; a < 4; ++a) dt[j][a] = C(ct.tensor[a].derivative(fn[j]));
      }
      p.dDk.push_back(dt);
    }
    for (const auto& e : {s.flux[0], s.flux[1], tc[0], tc[1], tc[2]}) {
      p.explicit_flux = p.explicit_flux || e.depends_on("x") || e.depends_on("y") || e.depends_on("t");
    }
    if (p.explicit_flux) {
      p.dTdt = {C(s.flux[0].derivative("t")), C(s.flux[1].derivative("t"))};
      p.dTdx = {C(s.flux[0].derivative("x")), C(s.flux[1].derivative("y"))};
      p.dCdx = {C(tc[0].derivative("x")), C(tc[1].derivative("y")), C(tc[1].derivative("x")),
                C(tc[2].derivative("y"))};
    }
    layout_.cross_partner.push_back(partners);
    layout_.d.push_back(s.d);
    layout_.rates.push_back(s.rates);
    layout_.state_dependent_diffusion.push_back(state_dep);
    layout_.has_flux.push_back(flux);
    sp_.push_back(std::move(p));
  }
  for (const auto& o : m.odes) {
    OdeProg p;
    p.R = C(o.source);
    for (const auto& f : fn) p.dR.push_back(C(o.source.derivative(f)));
    for (const auto& c : cn) p.dR_df.push_back(C(o.source.derivative(c)));
    op_.push_back(std::move(p));
  }
}

void CompiledModel::evaluate(const NodePoint& pt, NodeCoeffs& out, bool partials) const {
  const int nf = layout_.num_fields, nc = layout_.num_controls;
  std::array<double, 3 + kMaxFields + kMaxControls> env;
  env[0] = pt.x;
  env[1] = pt.y;
  env[2] = pt.t;
  for (int j = 0; j < nf; ++j) env[3 + j] = pt.fields[j];
  for (int p = 0; p < nc; ++p) env[3 + nf + p] = pt.controls[p];
  const double* e = env.data();
  auto sym = [e](const std::array<P, 3>& a) {
    Mat2 m;
    m(0, 0) = a[0].eval(e);
    m(0, 1) = m(1, 0) = a[1].eval(e);
    m(1, 1) = a[2].eval(e);
    return m;
  };
  auto full = [e](const std::array<P, 4>& a) {
    Mat2 m;
    m << a[0].eval(e), a[1].eval(e), a[2].eval(e), a[3].eval(e);
    return m;
  };
  for (std::size_t si = 0; si < sp_.size(); ++si) {
    const SpeciesProg& p = sp_[si];
    SpeciesCoeffs& c = out.s[si];
    c.D = sym(p.D);
    for (int a = 0; a < 2; ++a) {
      c.T[a] = p.T[a].eval(e);
      c.Tp[a] = p.Tp[a].eval(e);
      c.Tpp[a] = p.Tpp[a].eval(e);
    }
    c.C = sym(p.C);
    c.Cp = sym(p.Cp);
    c.Phi = p.Phi.eval(e);
    for (std::size_t k = 0; k < p.Dk.size(); ++k) c.Dk[k] = full(p.Dk[k]);
    if (!partials) continue;
    for (int j = 0; j < nf; ++j) {
      c.dD[j] = sym(p.dD[j]);
      c.dPhi[j] = p.dPhi[j].eval(e);
      for (std::size_t k = 0; k < p.Dk.size(); ++k) c.dDk[k][j] = full(p.dDk[k][j]);
    }
    for (int q = 0; q < nc; ++q) c.dPhi_df[q] = p.dPhi_df[q].eval(e);
  }
  for (std::size_t oi = 0; oi < op_.size(); ++oi) {
    const OdeProg& p = op_[oi];
    OdeCoeffs& c = out.o[oi];
    c.R = p.R.eval(e);
    if (!partials) continue;
    for (int j = 0; j < nf; ++j) c.dR[j] = p.dR[j].eval(e);
    for (int q = 0; q < nc; ++q) c.dR_df[q] = p.dR_df[q].eval(e);
  }
}

bool CompiledModel::deviation(const NodePoint& pt, int s, Vec2& dv) const {
  const SpeciesProg& p = sp_[s];
  if (!p.explicit_flux) return false;
  const int nf = layout_.num_fields, nc = layout_.num_controls;
  std::array<double, 3 + kMaxFields + kMaxControls> env;
  env[0] = pt.x;
  env[1] = pt.y;
  env[2] = pt.t;
  for (int j = 0; j < nf; ++j) env[3 + j] = pt.fields[j];
  for (int q = 0; q < nc; ++q) env[3 + nf + q] = pt.controls[q];
  const double* e = env.data();
  const double divT = p.dTdx[0].eval(e) + p.dTdx[1].eval(e);
  dv[0] = p.dTdt[0].eval(e) + p.dCdx[0].eval(e) + p.dCdx[1].eval(e) - divT * p.Tp[0].eval(e);
  dv[1] = p.dTdt[1].eval(e) + p.dCdx[2].eval(e) + p.dCdx[3].eval(e) - divT * p.Tp[1].eval(e);
  return true;
}

}  // namespace chemolb
