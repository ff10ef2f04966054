// Serial reference loops against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <omp.h>

#include "msgam/bootstrap.hpp"
#include "msgam/experiments.hpp"
#include "msgam/smoothing.hpp"

using namespace msgam;

namespace {

struct Problem {
  TimeSeriesData data;
  MSGAMSpec spec;
  SmoothingVector lambda;
  FitResult fit;
};

const Problem& scenario_problem() {
  static const Problem p = [] {
    Problem out;
    const ScenarioConfig c = scenario_one();
    out.data = simulate_scenario(c, 0).series.data;
    ModelOptions o;
    o.family = c.family;
    o.n_states = 2;
    o.n_basis = 9;
    out.spec = make_spec(out.data, o);
    out.lambda = SmoothingVector(2, 1, 8.0);
    out.fit = fit(out.spec, out.data, out.lambda);
    return out;
  }();
  return p;
}

Execution mode(const benchmark::State& state) { return state.range(0) ? Execution::parallel : Execution::serial; }

void label(benchmark::State& state) {
  state.SetLabel(state.range(0) ? "parallel, " + std::to_string(omp_get_max_threads()) + " threads" : "serial");
}

void BM_Bootstrap(benchmark::State& state) {
  const Problem& p = scenario_problem();
  BootstrapOptions o;
  o.replicates = 16;
  o.grid_size = 50;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(bootstrap_bands(p.spec, p.fit, p.data, p.lambda, o));
  label(state);
}

void BM_AicpSelect(benchmark::State& state) {
  const Problem& p = scenario_problem();
  const LambdaGrid grid(p.spec, std::vector<double>{1.0, 16.0, 256.0}, Tie::none);
  SelectionOptions o;
  o.fit.n_restarts = 2;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(aicp_select(p.spec, p.data, grid, o));
  label(state);
}

void BM_CvSelect(benchmark::State& state) {
  const Problem& p = scenario_problem();
  const LambdaGrid grid(p.spec, std::vector<double>{1.0, 16.0, 256.0}, Tie::all);
  SelectionOptions o;
  o.fit.n_restarts = 2;
  o.execution = mode(state);
  for (auto _ : state) benchmark::DoNotOptimize(cv_select(p.spec, p.data, grid, 4, 0.9, 1, o));
  label(state);
}

}  // namespace

BENCHMARK(BM_Bootstrap)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_AicpSelect)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CvSelect)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
