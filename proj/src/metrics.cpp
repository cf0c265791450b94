// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace moesim {

Breakdown::Breakdown(int num_layers, int num_gpus)
    : layers_(num_layers),
      gpus_(num_gpus),
      cells_(static_cast<std::size_t>(num_layers) * num_gpus) {
    for (auto& c : cells_) c.fill(0.0);
}

void Breakdown::add(int layer, int gpu, const GpuTimeline& t) {
    auto& cell = cells_[index(layer, gpu)];
    for (const auto& e : t.events) cell[idx(e.kind)] += e.duration;
}

double Breakdown::span(int layer, int gpu) const {
    double sum = 0.0;
    for (auto k : kAllEventKinds) {
        if (k != EventKind::expert_load_async) sum += at(layer, gpu, k);
    }
    return sum;
}

double Breakdown::gpu_total(int gpu, EventKind k) const {
    double sum = 0.0;
    for (int l = 0; l < layers_; ++l) sum += at(l, gpu, k);
    return sum;
}

double Breakdown::gpu_span(int gpu) const {
    double sum = 0.0;
    for (int l = 0; l < layers_; ++l) sum += span(l, gpu);
    return sum;
}

double throughput(const RunMetrics& m) {
    if (!(m.duration > 0.0)) throw ValidationError("throughput: run duration must be positive");
    return static_cast<double>(m.total_tokens) / m.duration;
}

double mean_ttft(const RunMetrics& m) {
    if (m.per_batch_latency.empty()) throw ValidationError("mean_ttft: run has no batches");
    const double sum = std::accumulate(m.per_batch_latency.begin(), m.per_batch_latency.end(), 0.0);
    return sum / static_cast<double>(m.per_batch_latency.size());
}

double throughput_variance(const RunMetrics& m) {
    const auto& x = m.per_batch_throughput;
    if (x.size() < 2) throw ValidationError("throughput_variance: need at least two batches");
    const double n = static_cast<double>(x.size());
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return ss / n;
}

double mean_layer_latency(const RunMetrics& m) {
    if (m.layer_latencies.empty()) throw ValidationError("mean_layer_latency: no layers simulated");
    return std::accumulate(m.layer_latencies.begin(), m.layer_latencies.end(), 0.0) /
           static_cast<double>(m.layer_latencies.size());
}

std::vector<EcdfPoint> load_ecdf(std::span<const TokenCount> loads) {
    if (loads.empty()) throw ValidationError("load_ecdf: no values");
    std::vector<TokenCount> sorted(loads.begin(), loads.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    std::vector<EcdfPoint> out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        // i + 1 == n at the last point, so the final fraction is exactly 1.
        out.push_back({static_cast<double>(sorted[i]), static_cast<double>(i + 1) / n});
    }
    return out;
}

double wait_fraction(std::span<const std::vector<GpuTimeline>> layers, int gpu) {
    double wait = 0.0;
    double span = 0.0;
    for (const auto& gpus : layers) {
        if (gpu < 0 || gpu >= static_cast<int>(gpus.size())) {
            throw ValidationError(fmt::format("wait_fraction: no GPU {}", gpu));
        }
        wait += gpus[gpu].total(EventKind::wait);
        span += gpus[gpu].span;
    }
    if (!(span > 0.0)) throw ValidationError("wait_fraction: zero span");
    return std::clamp(wait / span, 0.0, 1.0);
}

double wait_fraction(const Breakdown& b, int gpu) {
    if (gpu < 0 || gpu >= b.num_gpus()) {
        throw ValidationError(fmt::format("wait_fraction: no GPU {}", gpu));
    }
    const double span = b.gpu_span(gpu);
    if (!(span > 0.0)) throw ValidationError("wait_fraction: zero span");
    return std::clamp(b.gpu_total(gpu, EventKind::wait) / span, 0.0, 1.0);
}

}  // namespace moesim
