// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

// Serial reference paths against their OpenMP counterparts: batch-parallel
// simulate_run and cell-parallel sweeps.

#include <benchmark/benchmark.h>

#include "moesim/config.hpp"
#include "moesim/engine.hpp"
#include "moesim/sweep.hpp"

namespace {

using namespace moesim;

RunConfig bench_config(int batches) {
    RunConfig c;
    c.model = *model_preset("switch128");
    c.model_preset = "switch128";
    c.cluster.num_gpus = 8;
    c.cluster.expert_slots_per_gpu = 18;
    c.scheduler.placement = PlacementKind::blocked;
    c.scheduler.token_threshold_q =
        estimate_token_threshold(c.cluster.gpu_flops, c.model.dtype_bytes, c.cluster.pcie_bandwidth);
    WorkloadSpec w;
    w.num_batches = batches;
    w.tokens_per_gpu_per_batch = 8192;
    w.skew.mode = SkewMode::resample_uniform;
    w.skew.hi = 0.95;
    w.seed = 1;
    c.workload = w;
    return c;
}

void BM_SimulateRunSerial(benchmark::State& state) {
    const auto cfg = bench_config(16);
    const auto trace = materialize_trace(cfg);
    for (auto _ : state) {
        auto m = simulate_run(trace, cfg.model, cfg.cluster, cfg.scheduler, cfg.flags);
        benchmark::DoNotOptimize(m.duration);
    }
}

void BM_SimulateRunOmp(benchmark::State& state) {
    const auto cfg = bench_config(16);
    const auto trace = materialize_trace(cfg);
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto m = simulate_run_omp(trace, cfg.model, cfg.cluster, cfg.scheduler, cfg.flags, threads);
        benchmark::DoNotOptimize(m.duration);
    }
}

std::vector<SweepCell> bench_cells() {
    return expand_sweep(bench_config(2), {"alpha", {"0", "0.5", "0.9"}, {Policy::harmoeny, Policy::round_robin}});
}

void BM_SweepSerial(benchmark::State& state) {
    const auto cells = bench_cells();
    for (auto _ : state) benchmark::DoNotOptimize(run_cells_serial(cells).size());
}

void BM_SweepOmp(benchmark::State& state) {
    const auto cells = bench_cells();
    const int jobs = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(run_cells_omp(cells, jobs).size());
}

BENCHMARK(BM_SimulateRunSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateRunOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepOmp)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
