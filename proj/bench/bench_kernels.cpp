#include <benchmark/benchmark.h>

#include "chemolb/forward.hpp"

using namespace chemolb;

namespace {

struct Setup {
  ProblemModel model;
  ForwardSolver solver;
  ControlVector f;
  StepState a, b;
  explicit Setup(int n)
      : model(make(n)), solver(model), f(make_controls(model, ControlSource::Initial)) {
    a = solver.initial_state(f);
    b = a;
  }
  static ProblemModel make(int n) {
    ConfigDocument doc = builtin_config("attraction_repulsion");
    doc.set("domain", "nx", std::to_string(n));
    doc.set("domain", "ny", std::to_string(n));
    return load_model(doc);
  }
};

void BM_ForwardStepOpenMP(benchmark::State& st) {
  Setup s(static_cast<int>(st.range(0)));
  Workspace ws;
  for (auto _ : st) {
    forward_step(s.solver.context(), s.f, 0, s.a, s.b, ws);
    benchmark::DoNotOptimize(s.b.pops.data());
  }
  st.SetItemsProcessed(st.iterations() * s.solver.context().nodes);
}

void BM_ForwardStepReference(benchmark::State& st) {
  Setup s(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    forward_step_reference(s.solver.context(), s.f, 0, s.a, s.b);
    benchmark::DoNotOptimize(s.b.pops.data());
  }
  st.SetItemsProcessed(st.iterations() * s.solver.context().nodes);
}

}  // namespace

BENCHMARK(BM_ForwardStepOpenMP)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardStepReference)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
