#include <fmt/format.h>

#include "chemolb/errors.hpp"
#include "chemolb/model.hpp"

namespace chemolb {

namespace {

// Chemotactic tensor coefficient X u I or X u / (1 + zeta^2) I.
std::string chi(const std::string& form, const std::string& coef, const std::string& u, const std::string& zeta) {
  if (form == "linear") return fmt::format("{}*{}", coef, u);
  if (form == "rational") return fmt::format("{}*{}/(1 + {}^2)", coef, u, zeta);
  throw ParameterError("unknown chemotactic tensor form '" + form + "' (linear, rational)");
}

const char* kCommon = R"(
[domain]
nx = 32
ny = 32
h = 1

[time]
dt = 0.3333333333333333
steps = 60
)";

std::string crime() {
  return std::string(R"(
[model]
name = crime

[params]
sigma = 0.2
umin = 1e-8
)") + kCommon + R"(
[species.u]
diffusion = sigma
source = -u + f11*u*v + f12
initial = 1 + 0.3*exp(-((x - 0.4*Lx)^2 + (y - 0.5*Ly)^2)/(0.02*Lx*Ly))

[species.v]
diffusion = 1
source = f2 - u*v
cross.u = 2*v/max(u, umin)
initial = 1 + 0.2*exp(-((x - 0.6*Lx)^2 + (y - 0.4*Ly)^2)/(0.03*Lx*Ly))

[control.f11]
support = space
lower = 0
upper = 10
initial = 0.5
reference = 0.5

[control.f12]
support = space
lower = -10
upper = 10
initial = 0.5
reference = 0

[control.f2]
support = space
lower = 0
upper = 10
initial = 1
reference = 1
)";
}

std::string attraction_repulsion(const std::string& form) {
  return std::string(R"(
[model]
name = attraction_repulsion

[params]
d1 = 0.3
p = 2
umin = 1e-8
sigma2 = 0.5
sigma3 = 0.8
a1 = 1
a2 = 1
kappa = 2
chi_attr = 0.2
chi_rep = -0.1
omega_x = 0.05
omega_y = 0.02
)") + kCommon + fmt::format(R"(
[species.u]
diffusion = d1*max(u, umin)^(p - 1)
flux_x = omega_x*u
flux_y = omega_y*u
source = a1*u - a2*max(u, umin)^kappa
cross.v = {}
cross.w = {}
initial = 0.5 + 0.3*exp(-((x - 0.5*Lx)^2 + (y - 0.5*Ly)^2)/(0.02*Lx*Ly))

[species.v]
diffusion = sigma2
flux_x = omega_x*v
flux_y = omega_y*v
source = f21*u - f22*v - f23*u*v
initial = 0.4 + 0.2*exp(-((x - 0.35*Lx)^2 + (y - 0.6*Ly)^2)/(0.03*Lx*Ly))

[species.w]
diffusion = sigma3
flux_x = omega_x*w
flux_y = omega_y*w
source = f31*u - f32*w + f33
initial = 0.3 + 0.1*exp(-((x - 0.65*Lx)^2 + (y - 0.4*Ly)^2)/(0.03*Lx*Ly))
)", chi(form, "chi_attr", "u", "v"), chi(form, "chi_rep", "u", "w")) + R"(
[control.f21]
lower = 0
upper = 10
initial = 1
reference = 1

[control.f22]
lower = 0
upper = 10
initial = 0.5
reference = 0.5

[control.f23]
lower = 0
upper = 10
initial = 0.1
reference = 0.1

[control.f31]
lower = 0
upper = 10
initial = 0.8
reference = 0.8

[control.f32]
lower = 0
upper = 10
initial = 0.5
reference = 0.5

[control.f33]
lower = 0
upper = 10
initial = 0.1
reference = 0.1
)";
}

std::string two_species(const std::string& form) {
  return std::string(R"(
[model]
name = two_species

[params]
d1 = 0.3
d2 = 0.25
p = 2
umin = 1e-8
sigma3 = 0.8
mu1 = 1
mu2 = 1
a1 = 0.5
a2 = 0.5
chi1 = 0.15
chi2 = 0.1
omega_x = 0.03
omega_y = 0.0
)") + kCommon + fmt::format(R"(
[species.u]
diffusion = d1*max(u, umin)^(p - 1)
flux_x = omega_x*u
flux_y = omega_y*u
source = mu1*u*(1 - u - a1*v)
cross.w = {}
initial = 0.5 + 0.2*exp(-((x - 0.4*Lx)^2 + (y - 0.5*Ly)^2)/(0.02*Lx*Ly))

[species.v]
diffusion = d2*max(v, umin)^(p - 1)
flux_x = omega_x*v
flux_y = omega_y*v
source = mu2*v*(1 - v - a2*u)
cross.w = {}
initial = 0.4 + 0.2*exp(-((x - 0.6*Lx)^2 + (y - 0.5*Ly)^2)/(0.02*Lx*Ly))

[species.w]
diffusion = sigma3
flux_x = omega_x*w
flux_y = omega_y*w
source = -w + f31*u + f32*v + f33
initial = 0.5
)", chi(form, "chi1", "u", "w"), chi(form, "chi2", "v", "w")) + R"(
[control.f31]
lower = 0
upper = 10
initial = 0.5
reference = 0.5

[control.f32]
lower = 0
upper = 10
initial = 0.5
reference = 0.5

[control.f33]
lower = 0
upper = 10
initial = 0.1
reference = 0.1
)";
}

std::string tumor(const std::string& form) {
  return std::string(R"(
[model]
name = tumor

[params]
d1 = 0.2
p = 2
umin = 1e-8
sigma2 = 0.5
sigma3 = 0.8
mu1 = 0.5
mu2 = 0.2
mu3 = 0.5
theta = 0.5
chi1 = 0.1
chi2 = 0.05
r1 = 0.5
r2 = 0.5
gamma1 = 0.5
gamma2 = 0.5
gamma3 = 0.3
nu1 = 0.5
nu2 = 0.3
omega_x = 0.02
omega_y = 0.01
)") + kCommon + fmt::format(R"(
[species.u]
diffusion = d1*max(u, umin)^(p - 1)
flux_x = omega_x*u
flux_y = omega_y*u
source = mu1*u*w/(w + theta) - mu2*u + mu3*u*(1 - m - u)
cross.m = {}
cross.v = {}
initial = 0.1 + 0.3*exp(-((x - 0.5*Lx)^2 + (y - 0.5*Ly)^2)/(0.02*Lx*Ly))

[species.v]
diffusion = sigma2
flux_x = omega_x*v
flux_y = omega_y*v
source = r1*u*(1 - u) - r2*v + f
initial = 0.1

[species.w]
diffusion = sigma3
flux_x = omega_x*w
flux_y = omega_y*w
source = gamma1*m - gamma2*w - gamma3*u*w/(w + theta) + g
initial = 0.5

[ode.m]
source = -nu1*w*m + nu2*u*(1 - m - u)
initial = 0.5 + 0.1*cos(6.283185307179586*x/Lx)
)", chi(form, "chi1", "u", "m"), chi(form, "chi2", "u", "v")) + R"(
[control.f]
lower = 0
upper = 10
initial = 0.1
reference = 0.1

[control.g]
lower = 0
upper = 10
initial = 0.1
reference = 0.1
)";
}

}  // namespace

ConfigDocument builtin_config(const std::string& name, const std::string& form) {
  if (name == "crime") return ConfigDocument::parse(crime(), "builtin:crime");
  if (name == "attraction_repulsion" || name == "arc")
    return ConfigDocument::parse(attraction_repulsion(form), "builtin:attraction_repulsion");
  if (name == "two_species" || name == "ts") return ConfigDocument::parse(two_species(form), "builtin:two_species");
  if (name == "tumor" || name == "tis") return ConfigDocument::parse(tumor(form), "builtin:tumor");
  throw ParameterError("unknown built-in model '" + name + "' (crime, attraction_repulsion, two_species, tumor)");
}

ProblemModel builtin_crime() { return load_model(builtin_config("crime")); }
ProblemModel builtin_attraction_repulsion() { return load_model(builtin_config("attraction_repulsion")); }
ProblemModel builtin_two_species() { return load_model(builtin_config("two_species")); }
ProblemModel builtin_tumor() { return load_model(builtin_config("tumor")); }

}  // namespace chemolb
