#include <omp.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "chemolb/app.hpp"
#include "chemolb/collision.hpp"
#include "chemolb/errors.hpp"
#include "chemolb/io.hpp"
#include "chemolb/optimizer.hpp"
#include "chemolb/oracle.hpp"

namespace fs = std::filesystem;

namespace chemolb::app {

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel(double a, double b) { return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300}); }

// Integer copy of the published D2Q9 transform, kept apart from the library.
constexpr int kPrintedM0[9][9] = {
    {1, 1, 1, 1, 1, 1, 1, 1, 1},      {-4, -1, -1, -1, -1, 2, 2, 2, 2}, {4, -2, -2, -2, -2, 1, 1, 1, 1},
    {0, 1, 0, -1, 0, 1, -1, -1, 1},   {0, -2, 0, 2, 0, 1, -1, -1, 1},   {0, 0, 1, 0, -1, 1, 1, -1, -1},
    {0, 0, -2, 0, 2, 1, 1, -1, -1},   {0, 1, -1, 1, -1, 0, 0, 0, 0},    {0, 0, 0, 0, 0, 1, -1, 1, -1},
};

Outcome lattice_identities() {
  double worst = 0.0;
  bool m0_match = true;
  for (auto [h, tau] : {std::pair{1.0, 1.0}, std::pair{0.5, 0.1}, std::pair{2.0, 3.0}}) {
    const Lattice l = build_lattice(h, tau);
    const MomentTransform t = build_transform(l);
    double sw = 0.0;
    Vec2 swe = Vec2::Zero();
    Mat2 swee = Mat2::Zero(), swo = Mat2::Zero();
    for (int i = 0; i < kQ; ++i) {
      const Vec2 e = l.e(i);
      sw += l.w[i];
      swe += l.w[i] * e;
      swee += l.w[i] * e * e.transpose();
      swo += l.w[i] * (e * e.transpose() - l.cs2 * Mat2::Identity());
    }
    worst = std::max(worst, std::fabs(sw - 1.0));
    worst = std::max(worst, swe.norm() / l.c);
    worst = std::max(worst, (swee - l.cs2 * Mat2::Identity()).cwiseAbs().maxCoeff() / l.cs2);
    worst = std::max(worst, swo.cwiseAbs().maxCoeff() / l.cs2);
    for (int r = 0; r < 9; ++r) {
      for (int c = 0; c < 9; ++c) m0_match = m0_match && t.M0(r, c) == kPrintedM0[r][c];
    }
    const double c = l.c;
    const double e0[9] = {1, c * c, std::pow(c, 4), c, std::pow(c, 3), c, std::pow(c, 3), c * c, c * c};
    for (int i = 0; i < 9; ++i) worst = std::max(worst, rel(t.E0[i], e0[i]));
    worst = std::max(worst, (t.M * t.Minv - Mat9::Identity()).cwiseAbs().maxCoeff());
    worst = std::max(worst, (t.M0 * t.M0inv - Mat9::Identity()).cwiseAbs().maxCoeff());
    for (int i = 0; i < kQ; ++i) {
      m0_match = m0_match && t.M0(0, i) == 1 && t.M0(3, i) == l.ex[i] && t.M0(5, i) == l.ey[i];
    }
  }
  return {worst <= 1e-12 && m0_match, fmt::format("max identity error {:.2e}, M0 matches printed matrix: {}", worst,
                                                  m0_match ? "yes" : "no")};
}

Outcome equilibrium_moments() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double h = std::exp(1.5 * U(rng)), tau = std::exp(1.5 * U(rng));
    const Lattice l = build_lattice(h, tau);
    const double theta = 2.0 * U(rng);
    const double d = 1.0 + 0.5 * U(rng);
    const Vec2 T(U(rng) * l.c, U(rng) * l.c);
    Mat2 C;
    C << U(rng), U(rng), 0.0, U(rng);
    C(1, 0) = C(0, 1);
    C *= l.cs2;
    const Vec9 f = equilibrium(theta, T, C, d, l);
    double s0 = 0.0;
    Vec2 s1 = Vec2::Zero();
    Mat2 s2 = Mat2::Zero();
    for (int i = 0; i < kQ; ++i) {
      const Vec2 e = l.e(i);
      s0 += f[i];
      s1 += e * f[i];
      s2 += e * e.transpose() * f[i];
    }
    const Mat2 B = C + d * l.cs2 * theta * Mat2::Identity();
    const double scale0 = std::max(1.0, std::fabs(theta));
    worst = std::max(worst, std::fabs(s0 - theta) / scale0);
    worst = std::max(worst, (s1 - T).cwiseAbs().maxCoeff() / (l.c * std::max(1.0, T.cwiseAbs().maxCoeff() / l.c)));
    worst = std::max(worst, (s2 - B).cwiseAbs().maxCoeff() / (l.cs2 * std::max(1.0, B.cwiseAbs().maxCoeff() / l.cs2)));
  }
  return {worst <= 1e-12, fmt::format("10000 random triples, max relative moment error {:.2e}", worst)};
}

Outcome conservation() {
  ProblemModel m = builtin_crime().without_sources();
  m.domain.nx = m.domain.ny = 64;
  m.time.steps = 1000;
  const ForwardSolver solver(m);
  const int N = solver.context().nodes;
  std::vector<double> mass0(2, 0.0);
  double drift = 0.0;
  solver.run_final(make_controls(m, ControlSource::Initial),
                   [&](int n, const StepState&, const std::vector<double>& y) {
                     for (int s = 0; s < 2; ++s) {
                       double sum = 0.0;
                       for (int i = 0; i < N; ++i) sum += y[static_cast<std::size_t>(s) * N + i];
                       if (n == 0) mass0[s] = sum;
                       drift = std::max(drift, std::fabs(sum - mass0[s]) / std::fabs(mass0[s]));
                     }
                   });
  return {drift <= 1e-12, fmt::format("64x64, 1000 steps, max relative mass drift {:.2e}", drift)};
}

std::string heat_config(int n, double sigma, double t0, double dt, int steps) {
  return fmt::format(R"(
[model]
name = heat
[params]
sigma = {}
t0 = {}
[domain]
nx = {}
ny = {}
h = {}
[time]
dt = {}
steps = {}
[species.u]
diffusion = sigma
initial = exp(-((x - 0.5)^2 + (y - 0.5)^2)/(4*sigma*t0))
)",
                     format_double(sigma), format_double(t0), n, n, format_double(1.0 / n), format_double(dt),
                     steps);
}

Outcome heat_convergence() {
  const double sigma = 0.05, t0 = 0.01;
  const double T = 12.0 / 307.2;  // whole number of steps at every level when tau = h^2 / (6 sigma)
  std::vector<double> errs;
  std::string detail;
  for (int n : {32, 64, 128}) {
    const double h = 1.0 / n;
    const double dt = h * h / (6.0 * sigma);
    const int steps = static_cast<int>(std::lround(T / dt));
    const ProblemModel m = load_model(ConfigDocument::parse(heat_config(n, sigma, t0, dt, steps)));
    const ForwardSolver solver(m);
    const auto y = solver.fields(solver.run_final(make_controls(m, ControlSource::Initial)));
    const double t = t0 + steps * dt;
    std::vector<double> exact(y.size());
    for (int i = 0; i < solver.context().nodes; ++i) {
      const double dx = solver.grid().x(i) - 0.5, dy = solver.grid().y(i) - 0.5;
      exact[i] = t0 / t * std::exp(-(dx * dx + dy * dy) / (4.0 * sigma * t));
    }
    errs.push_back(oracle::relative_l2(y, exact));
    detail += fmt::format("{}^2: {:.3e}  ", n, errs.back());
  }
  const double p1 = std::log2(errs[0] / errs[1]), p2 = std::log2(errs[1] / errs[2]);
  const double order = std::min(p1, p2);
  return {order >= 1.8, detail + fmt::format("orders {:.3f}, {:.3f}", p1, p2)};
}

Outcome anisotropy() {
  const int n = 128;
  const double h = 1.0 / n;
  const double dt = h * h / (6.0 * 0.2);
  const int steps = static_cast<int>(std::lround(0.02 / dt));
  const std::string cfg = fmt::format(R"(
[model]
name = anisotropic_pulse
[domain]
nx = {0}
ny = {0}
h = {1}
[time]
dt = {2}
steps = {3}
[species.u]
diffusion_xx = 0.05
diffusion_xy = 0
diffusion_yy = 0.2
initial = exp(-((x - 0.5)^2 + (y - 0.5)^2)/0.004)
)",
                                      n, format_double(h), format_double(dt), steps);
  const ProblemModel m = load_model(ConfigDocument::parse(cfg));
  const ControlVector f = make_controls(m, ControlSource::Initial);
  const ForwardSolver solver(m);
  const auto lbm = solver.fields(solver.run_final(f));
  const auto fd = oracle::run_fd(m, f);
  const double e = oracle::relative_l2(lbm, fd.fields.back());
  return {e <= 2e-2, fmt::format("128x128, {} steps, relative L2 vs FD {:.3e}", steps, e)};
}

// Random weights and targets on every field and control slot.
ObjectiveSpec random_objective(const ProblemModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  ObjectiveSpec s = make_objective(m);
  const int N = m.domain.nx * m.domain.ny, levels = m.time.steps + 1;
  for (int j = 0; j < m.num_fields(); ++j) {
    s.a[j] = U(rng);
    s.b[j] = U(rng);
    s.final_target[j].values.resize(N);
    for (auto& v : s.final_target[j].values) v = U(rng);
    s.running_target[j].time_dependent = true;
    s.running_target[j].values.resize(static_cast<std::size_t>(levels) * N);
    for (auto& v : s.running_target[j].values) v = U(rng);
  }
  for (auto& a : s.alpha) a = 0.1 * U(rng);
  return s;
}

ControlVector random_like(const ControlVector& f, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  ControlVector d = f.zeros_like();
  for (auto& s : d.slots) {
    for (auto& v : s.values) v = nd(rng);
  }
  return d;
}

Outcome duality() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  int pairs = 0;
  for (const char* name : {"crime", "attraction_repulsion", "two_species", "tumor"}) {
    ConfigDocument doc = builtin_config(name);
    doc.set("domain", "nx", "8");
    doc.set("domain", "ny", "8");
    doc.set("time", "steps", "10");
    const ProblemModel m = load_model(doc);
    const ForwardSolver solver(m);
    const ControlVector f = make_controls(m, ControlSource::Initial);
    const Trajectory traj = solver.run(f);
    for (int k = 0; k < 5; ++k) {
      const ObjectiveSpec spec = random_objective(m, rng);
      const ControlVector df = random_like(f, rng);
      const double J = evaluate_cost(solver, spec, traj);
      const GradientResult g = assemble_gradient_discrete(solver, spec, traj, J);
      const double tangent = tangent_directional_derivative(solver, spec, traj, df);
      worst = std::max(worst, rel(tangent, g.gradient.dot(df)));
      ++pairs;
    }
  }
  return {worst <= 1e-10, fmt::format("{} pairs over 4 models (8x8, 10 steps), max relative gap {:.2e}", pairs, worst)};
}

Outcome gradient_check(std::ostream& out) {
  std::mt19937_64 rng(1234);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  bool ok = true;
  for (const char* name : {"crime", "attraction_repulsion"}) {
    ConfigDocument doc = builtin_config(name);
    doc.set("domain", "nx", "16");
    doc.set("domain", "ny", "16");
    doc.set("time", "steps", "20");
    const ProblemModel m = load_model(doc);
    const ForwardSolver solver(m);
    ObjectiveSpec spec = make_objective(m);
    const int N = m.domain.nx * m.domain.ny;
    for (int j = 0; j < m.num_fields(); ++j) {
      spec.a[j] = 1.0;
      spec.b[j] = 1.0;
      spec.final_target[j].values.assign(N, 0.8);
      spec.running_target[j].values.assign(N, 0.9);
    }
    for (auto& a : spec.alpha) a = 0.01;
    const ControlVector f = make_controls(m, ControlSource::Initial);
    ControlProblem prob(m, solver, spec, f);
    const VecX x = prob.flatten(f);
    VecX g;
    prob.value_and_gradient(x, g);
    std::vector<VecX> dirs;
    for (int k = 0; k < 10; ++k) {
      VecX d(x.size());
      for (auto& v : d) v = nd(rng);
      dirs.push_back(d / d.norm());
    }
    const auto rep = oracle::fd_gradient_check([&](const VecX& y) { return prob.value(y); }, x, g, dirs, 1e-5, 1e-4);
    fmt::print(out, "gradient check, {} (16x16, 20 steps):\n{}", name, rep.table());
    worst = std::max(worst, rep.max_rel_error);
    ok = ok && rep.pass;
  }
  return {ok, fmt::format("crime + attraction_repulsion, 10 directions each, max relative error {:.2e}", worst)};
}

Outcome cross_route() {
  const int n = 64;
  const double h = 1.0 / n, D = 0.05;
  const double dt = h * h / (6.0 * D);
  const std::string cfg = fmt::format(R"(
[model]
name = linear_decay
[params]
lambda = 1
[domain]
nx = {0}
ny = {0}
h = {1}
[time]
dt = {2}
steps = 200
[species.u]
diffusion = {3}
source = f - lambda*u
initial = 0.5 + 0.5*exp(-((x - 0.4)^2 + (y - 0.6)^2)/0.02)
[control.f]
support = space
initial = 1 + 0.5*sin(2*pi*x)*cos(pi*y)
reference = 0
)",
                                     n, format_double(h), format_double(dt), format_double(D));
  const ProblemModel m = load_model(ConfigDocument::parse(cfg));
  ObjectiveSpec spec = make_objective(m);
  const int N = n * n;
  spec.a[0] = 1.0;
  spec.b[0] = 1.0;
  spec.final_target[0].values.assign(N, 0.0);
  spec.running_target[0].values.assign(N, 0.0);
  for (int i = 0; i < N; ++i) {
    const double x = (i % n + 0.5) * h, y = (i / n + 0.5) * h;
    spec.final_target[0].values[i] = 0.3 + 0.2 * x;
    spec.running_target[0].values[i] = 0.4 * y;
  }
  spec.alpha[0] = 1e-3;
  const ControlVector f = make_controls(m, ControlSource::Initial);
  const ForwardSolver solver(m);
  const GradientResult gd = assemble_gradient_discrete(solver, spec, f);
  const GradientResult gc = assemble_gradient_continuous(m, spec, f);
  const auto a = gc.gradient.flatten(), b = gd.gradient.flatten();
  const double e = oracle::relative_l2(a, b);
  return {e <= 2e-2, fmt::format("64x64, 200 steps, relative L2 continuous vs discrete {:.3e}", e)};
}

Outcome control_recovery() {
  ConfigDocument doc = builtin_config("crime");
  doc.set("control.f11", "active", "false");
  doc.set("control.f11", "initial", "0");
  doc.set("control.f2", "active", "false");
  doc.set("control.f12", "initial", "0.5");
  doc.set("control.f12", "truth", "1 + 0.5*sin(pi*x/Lx)*cos(pi*y/Ly)");
  doc.set("objective", "terminal_weight.u", "1");
  doc.set("objective", "terminal_weight.v", "1");
  doc.set("objective", "running_weight.u", "1");
  doc.set("objective", "running_weight.v", "1");
  doc.set("objective", "alpha.f12", "1e-8");
  doc.set("objective", "targets", "truth");
  const ProblemModel m = load_model(doc);
  const ObjectiveSpec spec = load_objective(doc, m);
  const ForwardSolver solver(m);
  const ControlVector f0 = make_controls(m, ControlSource::Initial);
  const ControlVector truth = make_controls(m, ControlSource::Truth);
  ControlProblem prob(m, solver, spec, f0);
  OptimizerConfig cfg;
  cfg.method = Method::CgPR;
  cfg.step_rule = StepRule::Armijo;
  cfg.max_iter = 200;
  const OptimizeResult r = optimize(prob, prob.flatten(f0), cfg);
  const int slot = m.control_index("f12");
  const ControlVector fr = prob.controls(r.x);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.slots[slot].values.size(); ++i) {
    const double d = fr.slots[slot].values[i] - truth.slots[slot].values[i];
    num += d * d;
    den += truth.slots[slot].values[i] * truth.slots[slot].values[i];
  }
  const double err = std::sqrt(num / den);
  const double reduction = r.records.front().J / r.J;
  const int iters = r.records.back().k;
  return {reduction >= 1e3 && err <= 0.1 && iters <= 200 && !r.diverged,
          fmt::format("{} iterations, J {:.3e} -> {:.3e} (x{:.2e}), control error {:.3e}", iters, r.records.front().J,
                      r.J, reduction, err)};
}

const char* kDeterminismConfig = R"(
[model]
builtin = crime
[domain]
nx = 16
ny = 16
[time]
steps = 20
[control.f11]
active = false
initial = 0
[control.f2]
active = false
[control.f12]
initial = 0.5
truth = 1 + 0.5*sin(pi*x/Lx)*cos(pi*y/Ly)
[objective]
terminal_weight.u = 1
terminal_weight.v = 1
running_weight.u = 1
running_weight.v = 1
alpha.f12 = 1e-6
targets = truth
[optimizer]
method = cg-pr
step_rule = armijo
max_iter = 6
)";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / fmt::format("chemolb_determinism_{}", ::getpid());
  fs::create_directories(root);
  const fs::path cfg = root / "optimize.ini";
  {
    std::ofstream f(cfg);
    f << kDeterminismConfig;
  }
  const int saved = omp_get_max_threads();
  const int many = std::max(4, omp_get_num_procs());
  const std::vector<int> threads = {many, many, 1};
  std::vector<std::string> runs;
  std::ostringstream sink;
  bool ok = true;
  for (std::size_t r = 0; r < threads.size(); ++r) {
    OptimizeOptions opt;
    opt.config = cfg.string();
    opt.out_dir = (root / fmt::format("run{}", r)).string();
    opt.threads = threads[r];
    ok = ok && cmd_optimize(opt, sink, sink) == kOk;
    std::string all;
    for (const char* file : {"iterations.csv", "controls.csv", "gradient.csv", "final_fields.csv", "state.json"}) {
      all += slurp(fs::path(opt.out_dir) / file);
    }
    runs.push_back(all);
  }
  omp_set_num_threads(saved);
  const bool same = ok && runs[0] == runs[1] && runs[0] == runs[2] && !runs[0].empty();
  fs::remove_all(root);
  return {same, fmt::format("3 optimize runs (threads {}, {}, 1): outputs {}", many, many,
                            same ? "bit-identical" : "DIFFER")};
}

struct Criterion {
  int id;
  const char* name;
  double budget;  // seconds, 0 = none
  std::function<Outcome(std::ostream&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all = {
      {1, "lattice identities", 1.0, [](std::ostream&) { return lattice_identities(); }},
      {2, "equilibrium moments", 5.0, [](std::ostream&) { return equilibrium_moments(); }},
      {3, "mass conservation", 0.0, [](std::ostream&) { return conservation(); }},
      {4, "heat kernel convergence order", 120.0, [](std::ostream&) { return heat_convergence(); }},
      {5, "anisotropic diffusion vs FD", 120.0, [](std::ostream&) { return anisotropy(); }},
      {6, "tangent/adjoint duality", 0.0, [](std::ostream&) { return duality(); }},
      {7, "gradient vs finite differences", 300.0, [](std::ostream& o) { return gradient_check(o); }},
      {8, "continuous vs discrete gradient", 0.0, [](std::ostream&) { return cross_route(); }},
      {9, "control recovery", 600.0, [](std::ostream&) { return control_recovery(); }},
      {10, "determinism", 0.0, [](std::ostream&) { return determinism(); }},
  };
  return all;
}

}  // namespace

std::vector<int> suite_criteria(const std::string& suite) {
  if (suite == "lattice") return {1, 2};
  if (suite == "convergence") return {3, 4};
  if (suite == "duality") return {6};
  if (suite == "gradient") return {7, 8};
  if (suite == "oracle") return {5};
  if (suite == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  throw ParameterError("unknown verify suite '" + suite + "' (lattice, convergence, duality, gradient, oracle, all)");
}

std::vector<CriterionResult> run_criteria(const std::vector<int>& ids, std::ostream& out) {
  std::vector<CriterionResult> results;
  for (int id : ids) {
    const auto& list = criteria();
    const auto it = std::find_if(list.begin(), list.end(), [&](const Criterion& c) { return c.id == id; });
    if (it == list.end()) throw ParameterError(fmt::format("no acceptance criterion {}", id));
    CriterionResult r;
    r.id = id;
    r.name = it->name;
    const auto t0 = Clock::now();
    try {
      const Outcome o = it->run(out);
      r.pass = o.pass;
      r.detail = o.detail;
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (it->budget > 0.0 && r.seconds > it->budget) {
      r.pass = false;
      r.detail += fmt::format(" (over the {:.0f} s budget)", it->budget);
    }
    fmt::print(out, "criterion {:2d} {:<34} {}  {}  [{:.2f} s]\n", r.id, r.name, r.pass ? "PASS" : "FAIL", r.detail,
               r.seconds);
    out.flush();
    results.push_back(r);
  }
  return results;
}

}  // namespace chemolb::app
