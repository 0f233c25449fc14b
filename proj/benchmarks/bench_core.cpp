#include <benchmark/benchmark.h>

#include "tcstab/nonlinear.hpp"
#include "tcstab/rng.hpp"
#include "tcstab/stability.hpp"

using namespace tcstab;

namespace {

FlowParams base_params() {
  FlowParams p;
  p.nu = 1e-3;
  p.B = 1.0;
  p.R = 2.0;
  p.K = 8;
  return p;
}

void bm_build_grid(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    RadialGrid g = build_grid(2.0, n);
    benchmark::DoNotOptimize(g.deriv.data());
  }
}
BENCHMARK(bm_build_grid)->Arg(32)->Arg(64)->Arg(128);

void bm_assemble_operator(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  FlowParams p = base_params();
  RadialGrid g = build_grid(p.R, n);
  for (auto _ : state) {
    OperatorBundle b = assemble_mode_operator(p, 1, g);
    benchmark::DoNotOptimize(b.Le.data());
  }
}
BENCHMARK(bm_assemble_operator)->Arg(32)->Arg(64)->Arg(128);

void bm_resolvent_solve(benchmark::State& state) {
  FlowParams p = base_params();
  RadialGrid g = build_grid(p.R, 64);
  OperatorBundle b = assemble_mode_operator(p, 1, g);
  Rng rng(7);
  ModeField f{1, Rep::weighted, rand_field(rng, g)};
  for (auto _ : state) {
    ResolventSolution s = solve_resolvent(b, 0.3, f.values);
    benchmark::DoNotOptimize(s.omega.values.data());
  }
}
BENCHMARK(bm_resolvent_solve);

void bm_spectral_gap(benchmark::State& state) {
  FlowParams p = base_params();
  RadialGrid g = build_grid(p.R, 64);
  OperatorBundle b = assemble_mode_operator(p, 1, g);
  for (auto _ : state) {
    SpectralGapResult r = spectral_gap(b);
    benchmark::DoNotOptimize(r.psi);
  }
}
BENCHMARK(bm_spectral_gap)->Unit(benchmark::kMillisecond);

void bm_nonlinear_step(benchmark::State& state) {
  FlowParams p = base_params();
  RadialGrid g = build_grid(p.R, 48);
  NonlinearSim sim(p, g, 0.01);
  SimState s0 = bump_init_family(1.0, p, g);
  sim.set_state(s0);
  for (auto _ : state) {
    sim.step();
    benchmark::DoNotOptimize(sim.state().t);
  }
}
BENCHMARK(bm_nonlinear_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
