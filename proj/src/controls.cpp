#include <algorithm>
#include <cmath>

#include "chemolb/errors.hpp"
#include "chemolb/model.hpp"

namespace chemolb {

std::size_t ControlVector::size() const {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.values.size();
  return n;
}

ControlVector ControlVector::zeros_like() const {
  ControlVector z = *this;
  for (auto& s : z.slots) std::fill(s.values.begin(), s.values.end(), 0.0);
  return z;
}

double ControlVector::dot(const ControlVector& o) const {
  if (o.slots.size() != slots.size()) throw InternalError("control vector shape mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].values.size() != o.slots[k].values.size()) throw InternalError("control vector shape mismatch");
    for (std::size_t i = 0; i < slots[k].values.size(); ++i) acc += slots[k].values[i] * o.slots[k].values[i];
  }
  return acc;
}

double ControlVector::norm2() const { return std::sqrt(dot(*this)); }

double ControlVector::norm_inf() const {
  double m = 0.0;
  for (const auto& s : slots) {
    for (double v : s.values) m = std::max(m, std::fabs(v));
  }
  return m;
}

void ControlVector::axpy(double a, const ControlVector& x) {
  for (std::size_t k = 0; k < slots.size(); ++k) {
    for (std::size_t i = 0; i < slots[k].values.size(); ++i) slots[k].values[i] += a * x.slots[k].values[i];
  }
}

void ControlVector::scale(double a) {
  for (auto& s : slots) {
    for (double& v : s.values) v *= a;
  }
}

std::vector<double> ControlVector::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (const auto& s : slots) out.insert(out.end(), s.values.begin(), s.values.end());
  return out;
}

void ControlVector::assign(const std::vector<double>& flat) {
  if (flat.size() != size()) throw InternalError("control vector shape mismatch");
  std::size_t k = 0;
  for (auto& s : slots) {
    for (double& v : s.values) v = flat[k++];
  }
}

ControlVector make_controls(const ProblemModel& m, ControlSource src) {
  ControlVector cv;
  const int nodes = m.domain.nx * m.domain.ny;
  const int levels = m.time.steps + 1;
  const double h = m.domain.h;
  for (const auto& slot : m.controls) {
    ControlData d;
    d.name = slot.name;
    d.support = slot.support;
    d.nodes = nodes;
    d.levels = levels;
    d.lower = slot.lower;
    d.upper = slot.upper;
    const Expression* e = &slot.initial;
    if (src == ControlSource::Reference) e = &slot.reference;
    if (src == ControlSource::Truth) {
      // inactive slots keep their initial values
      if (slot.truth) {
        e = &*slot.truth;
      } else if (slot.active) {
        throw ConfigError("control." + slot.name, "truth", "no truth expression given");
      }
    }
    const auto prog = expr::Program::compile(*e, {"x", "y", "t"});
    auto value = [&](int level, int node) {
      const double env[3] = {(node % m.domain.nx + 0.5) * h, (node / m.domain.nx + 0.5) * h, level * m.time.dt};
      return prog.eval(env);
    };
    switch (slot.support) {
      case Support::SpaceTime:
        d.values.resize(static_cast<std::size_t>(levels) * nodes);
        for (int n = 0; n < levels; ++n) {
          for (int i = 0; i < nodes; ++i) d.values[static_cast<std::size_t>(n) * nodes + i] = value(n, i);
        }
        break;
      case Support::Space:
        d.values.resize(nodes);
        for (int i = 0; i < nodes; ++i) d.values[i] = value(0, i);
        break;
      case Support::Time:
        d.values.resize(levels);
        for (int n = 0; n < levels; ++n) d.values[n] = value(n, 0);
        break;
      case Support::Constant:
        d.values = {value(0, 0)};
        break;
    }
    cv.slots.push_back(std::move(d));
  }
  return cv;
}

ControlVector project_controls(const ControlVector& f) {
  ControlVector p = f;
  for (auto& s : p.slots) {
    if (!(s.lower <= s.upper)) throw ParameterError("control '" + s.name + "': lower bound exceeds upper bound");
    for (double& v : s.values) v = std::clamp(v, s.lower, s.upper);
  }
  return p;
}

}  // namespace chemolb
