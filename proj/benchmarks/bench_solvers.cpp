#include <rowsurv/qp.hpp>
#include <rowsurv/row_weights.hpp>
#include <rowsurv/simulate.hpp>
#include <rowsurv/survival.hpp>

#include <benchmark/benchmark.h>

namespace {

namespace sim = rowsurv::sim;

sim::GeneratedData dataset(Eigen::Index n, sim::TreatmentKind kind) {
  sim::ScenarioConfig c;
  c.n = n;
  c.treatment = kind;
  c.seed = 17;
  return sim::generate(c, 0);
}

void BM_RowBinary(benchmark::State& state) {
  const auto d = dataset(state.range(0), sim::TreatmentKind::Binary);
  for (auto _ : state) {
    auto r = rowsurv::weights::compute_row(d.x_observed, d.a, 0.001);
    benchmark::DoNotOptimize(r.weights.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RowBinary)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMillisecond)->Complexity();

void BM_RowContinuous(benchmark::State& state) {
  const auto d = dataset(state.range(0), sim::TreatmentKind::Continuous);
  for (auto _ : state) {
    auto r = rowsurv::weights::compute_row(d.x_observed, d.a, 0.001);
    benchmark::DoNotOptimize(r.weights.data());
  }
}
BENCHMARK(BM_RowContinuous)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

// Solver only, problem assembly excluded.
void BM_SolveQp(benchmark::State& state) {
  const auto d = dataset(state.range(0), sim::TreatmentKind::Binary);
  const auto p = rowsurv::weights::build_problem(rowsurv::weights::standardize(d.x_observed, d.a), 0.001);
  for (auto _ : state) {
    auto s = rowsurv::qp::solve_qp(p);
    benchmark::DoNotOptimize(s.weights.data());
  }
}
BENCHMARK(BM_SolveQp)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_WeightedCox(benchmark::State& state) {
  const auto d = dataset(state.range(0), sim::TreatmentKind::Binary);
  const auto w = rowsurv::weights::compute_row(d.x_observed, d.a, 0.001).weights;
  auto s = rowsurv::surv::uniform_sample(d.y, d.delta, d.a);
  s.weight = w;
  for (auto _ : state) {
    auto fit = rowsurv::surv::fit_weighted_cox(s);
    benchmark::DoNotOptimize(fit.theta);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_WeightedCox)->RangeMultiplier(4)->Range(256, 16384)->Unit(benchmark::kMicrosecond)->Complexity();

void BM_SandwichSe(benchmark::State& state) {
  const auto d = dataset(state.range(0), sim::TreatmentKind::Binary);
  const auto s = rowsurv::surv::uniform_sample(d.y, d.delta, d.a);
  const auto fit = rowsurv::surv::fit_weighted_cox(s);
  for (auto _ : state) benchmark::DoNotOptimize(rowsurv::surv::sandwich_se(s, fit));
}
BENCHMARK(BM_SandwichSe)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
