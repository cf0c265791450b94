// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/timeline.hpp"

namespace moesim {

/// Seconds per (layer, GPU, category), summed over all batches of a run.
class Breakdown {
public:
    Breakdown() = default;
    Breakdown(int num_layers, int num_gpus);

    int num_layers() const noexcept { return layers_; }
    int num_gpus() const noexcept { return gpus_; }

    double& at(int layer, int gpu, EventKind k) { return cells_[index(layer, gpu)][idx(k)]; }
    double at(int layer, int gpu, EventKind k) const { return cells_[index(layer, gpu)][idx(k)]; }

    void add(int layer, int gpu, const GpuTimeline& t);
    /// Sum of the partitioning categories (everything but async loads).
    double span(int layer, int gpu) const;
    double gpu_total(int gpu, EventKind k) const;
    double gpu_span(int gpu) const;

private:
    static std::size_t idx(EventKind k) { return static_cast<std::size_t>(k); }
    std::size_t index(int layer, int gpu) const {
        return static_cast<std::size_t>(layer) * gpus_ + gpu;
    }

    int layers_ = 0;
    int gpus_ = 0;
    std::vector<std::array<double, kNumEventKinds>> cells_;
};

struct RunMetrics {
    int num_gpus = 0;
    int num_layers = 0;
    TokenCount total_tokens = 0;
    double duration = 0.0;
    std::vector<double> per_batch_latency;
    std::vector<double> per_batch_throughput;
    std::vector<double> per_batch_alpha;
    std::vector<TokenCount> per_batch_tokens;
    std::vector<int> expert_swaps_per_batch;
    /// MoE layer latencies, batch-major (batch * num_layers + layer).
    std::vector<double> layer_latencies;
    Breakdown per_layer_breakdown;
    /// Post-scheduling tokens per GPU, batch-major like layer_latencies.
    std::vector<std::vector<TokenCount>> per_gpu_token_loads;
    /// Routed tokens per expert, batch-major.
    std::vector<std::vector<TokenCount>> per_expert_token_loads;
};

/// Tokens per second over the whole run. Throws ValidationError for zero duration.
double throughput(const RunMetrics& m);
/// Mean batch forward latency, standing in for time-to-first-token.
double mean_ttft(const RunMetrics& m);
/// Population variance of per-batch throughput; needs two or more batches.
double throughput_variance(const RunMetrics& m);
double mean_layer_latency(const RunMetrics& m);

struct EcdfPoint {
    double value = 0.0;
    double fraction = 0.0;

    friend bool operator==(const EcdfPoint&, const EcdfPoint&) = default;
};

/// One point per distinct value, ascending; the last fraction is exactly 1.
std::vector<EcdfPoint> load_ecdf(std::span<const TokenCount> loads);

/// Wait seconds over span seconds for one GPU, accumulated over layers.
/// `layers` holds one timeline per GPU for each simulated layer.
double wait_fraction(std::span<const std::vector<GpuTimeline>> layers, int gpu);
double wait_fraction(const Breakdown& b, int gpu);

}  // namespace moesim
