#include <benchmark/benchmark.h>

#include "loadshed/netcase.hpp"
#include "loadshed/ols.hpp"
#include "loadshed/powerflow.hpp"
#include "loadshed/scenarios.hpp"

namespace {

using namespace loadshed;

void BM_PowerFlowIeee14(benchmark::State& state) {
  const auto c = scale_to_total(ieee14(), 469.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_power_flow(c));
}
BENCHMARK(BM_PowerFlowIeee14)->Unit(benchmark::kMicrosecond);

void BM_AdmittanceIeee14(benchmark::State& state) {
  const auto c = ieee14();
  for (auto _ : state) benchmark::DoNotOptimize(build_admittance(c));
}
BENCHMARK(BM_AdmittanceIeee14)->Unit(benchmark::kMicrosecond);

// Stressed case with lines 2-3 and 4-9 out, warm-started from the outage power flow.
void BM_OlsDoubleOutage(benchmark::State& state) {
  const auto stressed = scale_to_total(ieee14(), 469.0);
  const auto costs = CostConfig::defaults(stressed);
  const auto c = apply_outage(stressed, std::vector<std::size_t>{stressed.branch_index(2, 3), stressed.branch_index(4, 9)});
  const auto prob = assemble_ols(c, costs);
  const auto pf = solve_power_flow(c);
  for (auto _ : state) benchmark::DoNotOptimize(solve_ols(prob, {}, pf));
}
BENCHMARK(BM_OlsDoubleOutage)->Unit(benchmark::kMillisecond);

void BM_DatasetSingleScenario(benchmark::State& state) {
  const auto base = scale_to_total(ieee14(), 469.0);
  const std::vector<Scenario> scenarios{make_scenario(base, {base.branch_index(2, 3)})};
  for (auto _ : state)
    benchmark::DoNotOptimize(generate_dataset(base, scenarios, static_cast<std::size_t>(state.range(0)), 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DatasetSingleScenario)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
