// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/metrics.hpp"
#include "moesim/policies.hpp"
#include "moesim/timeline.hpp"
#include "moesim/workload.hpp"

namespace moesim {

/// Analytic timing model for one expert-parallel MoE layer.
///
/// An expert is a two-layer MLP (m x p, then p x m). Loading it moves
/// (mp + pm) * dtype bytes over PCIe; running it on n tokens costs
/// n*p*(2m-1) + n*m*(2p-1) floating point operations. Loads overwrite a
/// finished expert in place, so a fetch never pays for a write-back.
struct CostModel {
    double d_model = 1.0;
    double d_ff = 1.0;
    double dtype_bytes = 2.0;
    double gpu_flops = 1.0;
    double pcie_bandwidth = 1.0;
    double metadata_time = 0.0;

    /// Defaults metadata_time to a 4 KiB exchange: 4096 / link_bw + latency.
    static CostModel from(const ClusterSpec& cluster, const ModelSpec& model);

    double expert_bytes() const { return 2.0 * d_model * d_ff * dtype_bytes; }
    double token_bytes() const { return d_model * dtype_bytes; }
    double expert_flops(TokenCount n) const;
    double expert_compute_time(TokenCount n) const { return expert_flops(n) / gpu_flops; }
    double expert_load_time() const { return expert_bytes() / pcie_bandwidth; }
};

struct SimFlags {
    bool rebalancing_enabled = true;
    bool async_loading_enabled = true;
    bool include_scheduler_walltime = false;

    friend bool operator==(const SimFlags&, const SimFlags&) = default;
};

struct ExpertWork {
    int expert = 0;
    TokenCount tokens = 0;
};

struct ExecutionPlan {
    /// Expert execution order.
    std::vector<int> order;
    /// Events relative to the start of expert processing.
    std::vector<TimelineEvent> events;
    double end = 0.0;
    int fetches = 0;
};

/// Seconds for one barrier-synchronised all-to-all: link latency plus the
/// busiest GPU's max(bytes out, bytes in) over the link bandwidth.
double all_to_all_time(std::span<const double> bytes_out, std::span<const double> bytes_in,
                       const ClusterSpec& cluster);

/// Orders one GPU's experts (resident experts first, then the ones that must
/// be fetched; each group by descending tokens, lowest index on ties) and
/// times compute plus fetches on a single transfer channel. A fetch may only
/// overwrite a slot whose expert has no work left this layer. With async
/// loading off every fetch runs on the compute track.
ExecutionPlan plan_gpu_execution(std::span<const ExpertWork> work, std::span<const int> resident,
                                 int slots, const SimFlags& flags, const CostModel& cost);

struct LayerResult {
    double layer_latency = 0.0;
    std::vector<GpuTimeline> gpus;
    int expert_swaps = 0;
    ScheduleTensor schedule;
    std::vector<TokenCount> gpu_loads;
    double scatter_barrier = 0.0;  // instant every GPU finishes the scatter
    double gather_barrier = 0.0;   // instant every GPU starts the gather
    double scheduler_wall_seconds = 0.0;
};

/// Builds the token schedule for one layer according to the policy.
ScheduleTensor schedule_layer(const RoutingMatrix& m_all, const Placement& placement,
                              const SchedulerConfig& config, const SimFlags& flags);

/// One MoE layer: metadata exchange, scheduling, scatter, expert processing
/// with prefetch, gather. All GPUs meet at the scatter and gather barriers.
LayerResult simulate_layer(const RoutingMatrix& m_all, const Placement& placement,
                           const SchedulerConfig& config, const SimFlags& flags,
                           const CostModel& cost, const ClusterSpec& cluster);

/// Placement used for each (batch, layer) of a run under the configured policy.
/// Affinity re-profiles every `affinity_refresh_batches` batches from the
/// preceding window of routing counts.
std::vector<std::vector<Placement>> plan_placements(const Trace& trace, const ModelSpec& model,
                                                    const ClusterSpec& cluster,
                                                    const SchedulerConfig& config);

/// Sequential reference: batches processed in order on the calling thread.
RunMetrics simulate_run(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                        const SchedulerConfig& config, const SimFlags& flags);

/// Same result as simulate_run, with batches spread over OpenMP threads.
/// Results are merged in batch order, so the output is bit-identical.
RunMetrics simulate_run_omp(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                            const SchedulerConfig& config, const SimFlags& flags, int threads);

}  // namespace moesim
