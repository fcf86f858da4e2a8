// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "svlab/mdp.hpp"
#include "svlab/oracle.hpp"

using namespace svlab;

namespace {

const TabularMdp& rooms() {
  static const TabularMdp mdp = build_four_rooms(0.8, 0.999);
  return mdp;
}

const TabularPolicy& uniform_policy() {
  static const TabularPolicy pi = TabularPolicy::uniform(rooms().num_states(), rooms().num_actions());
  return pi;
}

void BM_Rollout(benchmark::State& state) {
  const auto envs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rollout(rooms(), uniform_policy(), 1024, envs, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(envs) * 1024);
}

void BM_RolloutSerial(benchmark::State& state) {
  const auto envs = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rollout_serial(rooms(), uniform_policy(), 1024, envs, 1));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(envs) * 1024);
}

const TabularMdp& big_random() {
  static const TabularMdp mdp = build_random_mdp(400, 8, 0.99, 3);
  return mdp;
}

void BM_ValueIteration(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(value_iteration(big_random(), 50));
}

void BM_ValueIterationSerial(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(value_iteration_serial(big_random(), 50));
}

}  // namespace

BENCHMARK(BM_Rollout)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RolloutSerial)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ValueIteration)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ValueIterationSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
