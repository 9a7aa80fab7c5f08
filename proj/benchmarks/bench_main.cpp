#include "parinv/faultsim.hpp"
#include "parinv/posterior.hpp"
#include "parinv/problems.hpp"
#include "parinv/samplers.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

const parinv::fault::FaultProblem& desk_problem() {
  static const parinv::fault::FaultProblem fp = parinv::fault::make_fault_problem({});
  return fp;
}

void BM_FaultForwardMatrix(benchmark::State& state) {
  const auto& fp = desk_problem();
  for (auto _ : state) {
    benchmark::DoNotOptimize(parinv::fault::build_forward_matrix(fp.truth, fp.lattice, fp.stations));
  }
}
BENCHMARK(BM_FaultForwardMatrix)->Unit(benchmark::kMillisecond);

void BM_FaultCouplingMatrix(benchmark::State& state) {
  const auto& fp = desk_problem();
  const auto op = parinv::fault::build_forward_matrix(fp.truth, fp.lattice, fp.stations);
  for (auto _ : state) benchmark::DoNotOptimize(parinv::coupling_matrix(op, fp.problem.gram));
}
BENCHMARK(BM_FaultCouplingMatrix)->Unit(benchmark::kMillisecond);

void BM_FaultLogDensity(benchmark::State& state) {
  const auto& fp = desk_problem();
  const parinv::PosteriorEvaluator ev(fp.problem, fp.prior);
  parinv::Vector x(7);
  x << parinv::fault::true_m(), -4.0;
  for (auto _ : state) benchmark::DoNotOptimize(ev.log_density(x));
}
BENCHMARK(BM_FaultLogDensity)->Unit(benchmark::kMillisecond);

void BM_ToyLogDensity(benchmark::State& state) {
  const auto sp = parinv::make_toy_scalar({});
  const parinv::PosteriorEvaluator ev(sp.problem, sp.prior);
  parinv::Vector x(2);
  x << 0.2, -3.0;
  for (auto _ : state) benchmark::DoNotOptimize(ev.log_density(x));
}
BENCHMARK(BM_ToyLogDensity)->Unit(benchmark::kMicrosecond);

void BM_TransitionMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> lw(n + 1);
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = -0.1 * static_cast<double>(i % 7);
  for (auto _ : state) benchmark::DoNotOptimize(parinv::TransitionMatrix::build(lw));
}
BENCHMARK(BM_TransitionMatrix)->Arg(1)->Arg(8)->Arg(20);

}  // namespace

BENCHMARK_MAIN();
