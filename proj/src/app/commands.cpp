#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fstream>
#include <json.hpp>
#include <map>
#include <ostream>
#include <sstream>

#include "chemolb/app.hpp"
#include "chemolb/errors.hpp"
#include "chemolb/io.hpp"
#include "chemolb/optimizer.hpp"

#ifndef CHEMOLB_VERSION_STAMP
#define CHEMOLB_VERSION_STAMP "unknown"
#endif

namespace fs = std::filesystem;

namespace chemolb::app {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("file", path, "cannot open file");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << text;
}

// Collects outputs and timings; written last as manifest.json.
class Manifest {
 public:
  Manifest(std::string command, const std::string& config_path, const std::string& config_text)
      : command_(std::move(command)), config_(config_path), hash_(fnv1a_hex(config_text)) {}

  void set_model(const ProblemModel& m) {
    model_ = m.name;
    nx_ = m.domain.nx;
    ny_ = m.domain.ny;
    h_ = m.domain.h;
    dt_ = m.time.dt;
    steps_ = m.time.steps;
  }
  void add_output(const std::string& name) { outputs_.push_back(name); }
  void add_timing(const std::string& stage, double s) { timings_[stage] += s; }
  void set(const std::string& key, nlohmann::json v) { extra_[key] = std::move(v); }
  std::size_t output_count() const { return outputs_.size(); }

  void write(const fs::path& dir) const {
    nlohmann::json j;
    j["command"] = command_;
    j["config"] = config_;
    j["config_hash"] = hash_;
    j["model"] = model_;
    j["grid"] = {{"nx", nx_}, {"ny", ny_}, {"h", h_}};
    j["time"] = {{"dt", dt_}, {"steps", steps_}, {"final_time", dt_ * steps_}};
    j["seed"] = nullptr;  // no random draws in simulate/optimize
    j["threads"] = omp_get_max_threads();
    j["version"] = CHEMOLB_VERSION_STAMP;
    j["outputs"] = outputs_;
    j["timings"] = timings_;
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_, config_, hash_, model_;
  int nx_ = 0, ny_ = 0, steps_ = 0;
  double h_ = 0.0, dt_ = 0.0;
  std::vector<std::string> outputs_;
  std::map<std::string, double> timings_;
  nlohmann::json extra_ = nlohmann::json::object();
};

void print_resolved(const ProblemModel& model, const ForwardSolver& solver, std::ostream& out) {
  out << "# resolved model\n" << serialize_model(model).serialize();
  const Lattice& l = solver.lattice();
  fmt::print(out, "# lattice: c = {}, cs2 = {}, final time = {}, cfl = {:.6g}\n", format_double(l.c),
             format_double(l.cs2), format_double(model.final_time()), solver.setup_diagnostics().cfl);
  for (const auto& w : solver.setup_diagnostics().warnings) out << "# warning: " << w << '\n';
}

// Shared error mapping for the commands.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kConfigError;
  } catch (const ParameterError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kConfigError;
  } catch (const StabilityError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kConfigError;
  } catch (const UnsupportedModelError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kConfigError;
  } catch (const DivergenceError& e) {
    fmt::print(err, "divergence at time index {}: {}\n", e.step(), e.what());
    return kDivergence;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kDivergence;
  }
}

// Rejects section names no command reads.
void check_sections(const ConfigDocument& doc) {
  static const std::vector<std::string> known = {"model", "params", "domain", "time", "species", "ode",
                                                 "control", "objective", "optimizer", "output"};
  for (const auto& s : doc.sections()) {
    if (s.name.empty()) continue;
    const std::string head = s.name.substr(0, s.name.find('.'));
    if (std::find(known.begin(), known.end(), head) == known.end()) {
      throw ConfigError(s.name, "", "unknown section");
    }
  }
}

// Accepts a state JSON or a manifest naming one.
OptimizerState load_resume_state(const std::string& path) {
  const std::string text = read_text(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("resume", path, std::string("not valid JSON: ") + e.what());
  }
  if (j.contains("state_file")) {
    const fs::path state = fs::path(path).parent_path() / j["state_file"].get<std::string>();
    return OptimizerState::from_json(read_text(state.string()));
  }
  return OptimizerState::from_json(text);
}

std::string snapshot_name(int n, const char* ext) { return fmt::format("fields_{:06d}.{}", n, ext); }

}  // namespace

std::string resolve_output_dir(const std::string& out_dir) {
  const fs::path p(out_dir);
  const char* root = std::getenv("CHEMOLB_OUTPUT_ROOT");
  if (root && *root && p.is_relative()) return (fs::path(root) / p).string();
  return p.string();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return fmt::format("{:016x}", h);
}

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    set_threads(opt.threads);
    const auto t_load = Clock::now();
    const std::string text = read_text(opt.config);
    const ConfigDocument doc = ConfigDocument::parse(text, opt.config);
    check_sections(doc);
    const ProblemModel model = load_model(doc);
    int every = doc.get_int("output", "snapshot_every", model.time.steps);
    if (opt.snapshot_every > 0) every = opt.snapshot_every;
    if (every <= 0) throw ConfigError("output", "snapshot_every", "must be positive");
    const bool vtk = doc.get_bool("output", "vtk", true);
    const bool csv = doc.get_bool("output", "csv", true);
    doc.reject_unused({"output"});
    const ForwardSolver solver(model);
    const ControlVector f = make_controls(model, ControlSource::Initial);
    const double load_s = seconds_since(t_load);

    if (opt.dry_run) {
      print_resolved(model, solver, out);
      fmt::print(out, "# snapshots every {} steps (csv: {}, vtk: {})\n", every, csv, vtk);
      return kOk;
    }

    const fs::path dir = resolve_output_dir(opt.out_dir);
    fs::create_directories(dir);
    Manifest man("simulate", opt.config, text);
    man.set_model(model);
    man.add_timing("load", load_s);
    const auto names = model.field_names();
    double write_s = 0.0;
    const auto t_run = Clock::now();
    ForwardDiagnostics diag;
    solver.run(f, RecordPolicy{RecordMode::Stride, model.time.steps + 1},
               [&](int n, const StepState&, const std::vector<double>& fields) {
                 if (n % every != 0 && n != model.time.steps) return;
                 const auto tw = Clock::now();
                 if (csv) {
                   write_fields_csv((dir / snapshot_name(n, "csv")).string(), solver.grid(), names, fields);
                   man.add_output(snapshot_name(n, "csv"));
                 }
                 if (vtk) {
                   write_fields_vtk((dir / snapshot_name(n, "vtk")).string(), solver.grid(), names, fields,
                                    fmt::format("{} t={}", model.name, format_double(n * model.time.dt)));
                   man.add_output(snapshot_name(n, "vtk"));
                 }
                 write_s += seconds_since(tw);
               },
               &diag);
    man.add_timing("forward", seconds_since(t_run) - write_s);
    man.add_timing("write", write_s);
    man.set("cfl", diag.cfl);
    man.set("warnings", diag.warnings);
    man.write(dir);
    fmt::print(out, "simulate: {} steps on {}x{}, {} files written to {}\n", model.time.steps, model.domain.nx,
               model.domain.ny, man.output_count() + 1, dir.string());
    return kOk;
  });
}

int cmd_optimize(const OptimizeOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    set_threads(opt.threads);
    const auto t_load = Clock::now();
    const std::string text = read_text(opt.config);
    const ConfigDocument doc = ConfigDocument::parse(text, opt.config);
    check_sections(doc);
    if (!doc.has_section("objective")) throw ConfigError("objective", "", "section required by optimize");
    if (!doc.has_section("optimizer")) throw ConfigError("optimizer", "", "section required by optimize");
    const ProblemModel model = load_model(doc);
    OptimizerConfig cfg = load_optimizer_config(doc);
    if (opt.max_iter) cfg.max_iter = *opt.max_iter;
    if (opt.tol) cfg.tol = *opt.tol;
    if (opt.method) {
      try {
        cfg.method = parse_method(*opt.method);
      } catch (const ParameterError& e) {
        throw ConfigError("optimizer", "method", e.what());
      }
    }
    try {
      cfg.validate();
    } catch (const ParameterError& e) {
      throw ConfigError("optimizer", "", e.what());
    }
    const ObjectiveSpec spec = load_objective(doc, model);
    const ForwardSolver solver(model);
    const ControlVector f0 = make_controls(model, ControlSource::Initial);
    std::optional<OptimizerState> resume;
    if (!opt.resume.empty()) resume = load_resume_state(opt.resume);
    const double load_s = seconds_since(t_load);

    if (opt.dry_run) {
      print_resolved(model, solver, out);
      fmt::print(out, "# optimizer: method = {}, step_rule = {}, max_iter = {}, tol = {}, controls = {}\n",
                 method_name(cfg.method), step_rule_name(cfg.step_rule), cfg.max_iter, format_double(cfg.tol),
                 f0.size());
      if (resume) fmt::print(out, "# resuming at iteration {}\n", resume->k);
      return kOk;
    }

    const fs::path dir = resolve_output_dir(opt.out_dir);
    fs::create_directories(dir);
    Manifest man("optimize", opt.config, text);
    man.set_model(model);
    man.add_timing("load", load_s);
    man.set("method", method_name(cfg.method));
    man.set("step_rule", step_rule_name(cfg.step_rule));
    if (resume) man.set("resumed_from", opt.resume);

    ControlProblem problem(model, solver, spec, f0);
    std::ofstream iters(dir / "iterations.csv", std::ios::binary);
    if (!iters) throw std::runtime_error("cannot write iterations.csv");
    iters << iteration_csv_header() << '\n';
    man.add_output("iterations.csv");
    man.add_output("state.json");
    const auto t_opt = Clock::now();
    const OptimizeResult res = optimize(
        problem, problem.flatten(f0), cfg,
        [&](const IterationRecord& rec, const OptimizerState& st) {
          iters << iteration_csv_row(rec) << '\n';
          iters.flush();
          write_text(dir / "state.json", st.to_json() + "\n");
          fmt::print(out, "iter {:4d}  J = {:.10e}  |g| = {:.4e}  step = {:.4e}\n", rec.k, rec.J, rec.grad_l2,
                     rec.step);
        },
        resume);
    man.add_timing("optimize", seconds_since(t_opt));

    const auto t_write = Clock::now();
    const ControlVector f = problem.controls(res.x);
    ControlVector g = f.zeros_like();
    g.assign(std::vector<double>(res.g.data(), res.g.data() + res.g.size()));
    write_controls_csv((dir / "controls.csv").string(), f);
    write_controls_csv((dir / "gradient.csv").string(), g);
    man.add_output("controls.csv");
    man.add_output("gradient.csv");
    if (!res.diverged) {
      const std::vector<double> fields = solver.fields(solver.run_final(f));
      write_fields_csv((dir / "final_fields.csv").string(), solver.grid(), model.field_names(), fields);
      write_fields_vtk((dir / "final_fields.vtk").string(), solver.grid(), model.field_names(), fields,
                       model.name + " optimized");
      man.add_output("final_fields.csv");
      man.add_output("final_fields.vtk");
    }
    man.add_timing("write", seconds_since(t_write));
    man.set("state_file", "state.json");
    man.set("iterations", res.records.empty() ? 0 : res.records.back().k);
    man.set("final_J", res.J);
    man.set("initial_J", res.records.empty() ? res.J : res.records.front().J);
    man.set("converged", res.converged);
    man.set("diverged", res.diverged);
    man.set("message", res.message);
    man.set("evaluations", problem.evaluations());
    man.write(dir);
    fmt::print(out, "optimize: {} ({}), J = {}, |g| = {:.4e}, outputs in {}\n", res.message,
               res.converged ? "converged" : "not converged", format_double(res.J), res.g.norm(), dir.string());
    if (res.diverged) {
      fmt::print(err, "optimizer aborted: {}\n", res.message);
      return kDivergence;
    }
    return kOk;
  });
}

int cmd_verify(const std::string& suite, int threads, std::ostream& out, std::ostream& err) {
  std::vector<int> ids;
  try {
    ids = suite_criteria(suite);
  } catch (const ParameterError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return kConfigError;
  }
  set_threads(threads);
  const auto results = run_criteria(ids, out);
  bool ok = true;
  fmt::print(out, "\n{:>3}  {:<34} {:>6} {:>9}  {}\n", "id", "check", "result", "seconds", "detail");
  for (const auto& r : results) {
    fmt::print(out, "{:>3}  {:<34} {:>6} {:>9.2f}  {}\n", r.id, r.name, r.pass ? "PASS" : "FAIL", r.seconds,
               r.detail);
    ok = ok && r.pass;
  }
  fmt::print(out, "verify {}: {}\n", suite, ok ? "all passed" : "FAILED");
  return ok ? kOk : kVerificationFailure;
}

}  // namespace chemolb::app
