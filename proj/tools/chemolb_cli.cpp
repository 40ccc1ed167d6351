#include <CLI11.hpp>
#include <iostream>

#include "chemolb/app.hpp"

namespace app = chemolb::app;

int main(int argc, char** argv) {
  CLI::App cli{"chemolb: MRT lattice Boltzmann chemotaxis solver with adjoint-based control"};
  cli.require_subcommand(1);

  app::SimulateOptions sim;
  auto* s = cli.add_subcommand("simulate", "run a forward simulation and write field snapshots");
  s->add_option("--config", sim.config, "model configuration file")->required();
  s->add_option("--out-dir", sim.out_dir, "output directory (relative paths honour CHEMOLB_OUTPUT_ROOT)");
  s->add_option("--snapshot-every", sim.snapshot_every, "write fields every N steps");
  s->add_option("--threads", sim.threads, "OpenMP worker count");
  s->add_flag("--dry-run", sim.dry_run, "print resolved parameters and exit");

  app::OptimizeOptions opt;
  int max_iter = -1;
  double tol = -1.0;
  std::string method;
  auto* o = cli.add_subcommand("optimize", "recover controls by minimizing the configured objective");
  o->add_option("--config", opt.config, "model, objective and optimizer configuration")->required();
  o->add_option("--out-dir", opt.out_dir, "output directory (relative paths honour CHEMOLB_OUTPUT_ROOT)");
  o->add_option("--max-iter", max_iter, "iteration limit (0 evaluates J and the gradient once)");
  o->add_option("--tol", tol, "gradient tolerance relative to the initial norm");
  o->add_option("--method", method, "gradient, cg-fr, cg-pr, cg-hs or cg-dy");
  o->add_option("--threads", opt.threads, "OpenMP worker count");
  o->add_option("--resume", opt.resume, "manifest.json or state.json of an earlier run");
  o->add_flag("--dry-run", opt.dry_run, "print resolved parameters and exit");

  std::string suite = "all";
  int vthreads = 0;
  auto* v = cli.add_subcommand("verify", "run verification suites");
  v->add_option("suite", suite, "lattice, convergence, duality, gradient, oracle or all");
  v->add_option("--threads", vthreads, "OpenMP worker count");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kConfigError;
  }

  if (*s) return app::cmd_simulate(sim, std::cout, std::cerr);
  if (*o) {
    if (max_iter >= 0) opt.max_iter = max_iter;
    if (tol >= 0.0) opt.tol = tol;
    if (!method.empty()) opt.method = method;
    return app::cmd_optimize(opt, std::cout, std::cerr);
  }
  return app::cmd_verify(suite, vthreads, std::cout, std::cerr);
}
