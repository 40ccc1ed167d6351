#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace chemolb::app {

enum ExitCode : int { kOk = 0, kDivergence = 1, kConfigError = 2, kVerificationFailure = 3 };

struct CommonOptions {
  std::string config;
  std::string out_dir = "chemolb_out";
  int threads = 0;  // 0: keep the OpenMP default
  bool dry_run = false;
};

struct SimulateOptions : CommonOptions {
  int snapshot_every = 0;  // 0: [output] snapshot_every, else initial and final levels only
};

struct OptimizeOptions : CommonOptions {
  std::optional<int> max_iter;
  std::optional<double> tol;
  std::optional<std::string> method;
  std::string resume;  // path to a state JSON written by a previous run
};

// Output directory after applying the CHEMOLB_OUTPUT_ROOT override to relative paths.
std::string resolve_output_dir(const std::string& out_dir);
// 64-bit FNV-1a, printed as 16 hex digits.
std::string fnv1a_hex(const std::string& text);
void set_threads(int threads);

int cmd_simulate(const SimulateOptions& opt, std::ostream& out, std::ostream& err);
int cmd_optimize(const OptimizeOptions& opt, std::ostream& out, std::ostream& err);
// Suites: lattice, convergence, duality, gradient, oracle, all.
int cmd_verify(const std::string& suite, int threads, std::ostream& out, std::ostream& err);

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// Runs the numbered acceptance criteria (1..10), printing one line each.
std::vector<CriterionResult> run_criteria(const std::vector<int>& ids, std::ostream& out);
std::vector<int> suite_criteria(const std::string& suite);

}  // namespace chemolb::app
