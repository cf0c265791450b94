// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <string_view>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

enum class Policy { harmoeny, round_robin, even_split, affinity };
enum class PlacementKind { round_robin, blocked };

std::string_view to_string(Policy p);
std::string_view to_string(PlacementKind p);
/// Throws ValidationError for unknown names.
Policy parse_policy(std::string_view name);
PlacementKind parse_placement_kind(std::string_view name);

struct SchedulerConfig {
    TokenCount token_threshold_q = 1;
    Policy policy = Policy::harmoeny;
    // Static placement used by the harmoeny and even_split policies.
    PlacementKind placement = PlacementKind::round_robin;
    // Affinity policy re-profiles every this many batches.
    int affinity_refresh_batches = 1;

    void validate() const;

    friend bool operator==(const SchedulerConfig&, const SchedulerConfig&) = default;
};

struct PopularityProfile {
    std::vector<TokenCount> tokens_per_expert;
    int window_batches = 0;
};

Placement round_robin_placement(int num_experts, int num_gpus);
/// Contiguous blocks of ceil(E/G) experts per GPU.
Placement blocked_placement(int num_experts, int num_gpus);
Placement make_placement(PlacementKind kind, int num_experts, int num_gpus);

/// Every (source, expert) bucket goes to the expert's home GPU.
ScheduleTensor initial_assign(const RoutingMatrix& m_all, const Placement& placement);

struct RebalanceMove {
    int from = 0;
    int expert = 0;
    int src_gpu = 0;  // overloaded destination tokens are taken from
    int dst_gpu = 0;  // least-loaded destination they are redirected to
    TokenCount tokens = 0;

    friend bool operator==(const RebalanceMove&, const RebalanceMove&) = default;
};

enum class RebalanceExit { balanced, insufficient_tokens, no_feasible_transfer };

struct RebalanceTrace {
    ScheduleTensor schedule;
    std::vector<RebalanceMove> moves;
    RebalanceExit exit = RebalanceExit::balanced;
};

/// Greedy token rebalancing. Repeatedly takes the largest (source, expert)
/// bucket feeding the most loaded GPU and redirects as much of it as fits to
/// the least loaded GPU without pushing that GPU above floor(total / G).
/// Stops when no GPU is above the average, when the candidate bucket holds
/// fewer than `q` tokens, or when the least loaded GPU cannot take `q` more.
/// All argmax/argmin ties resolve to the lowest index.
ScheduleTensor rebalance(const ScheduleTensor& s_initial, TokenCount q);
RebalanceTrace rebalance_traced(const ScheduleTensor& s_initial, TokenCount q);

/// Splits every (source, expert) bucket evenly over all GPUs. Per expert the
/// leftover tokens are dealt round-robin starting at GPU 0, continuing across
/// sources, so per-GPU loads differ by at most the number of experts.
ScheduleTensor even_split_assign(const RoutingMatrix& m_all, int num_gpus);

/// Longest-processing-time packing of experts by profiled popularity onto the
/// GPU with the smallest popularity mass that still has a free slot.
/// Throws ValidationError when E > G * slots.
Placement affinity_placement(const PopularityProfile& profile, int num_gpus, int slots);

/// Raw bound phi * dtype / (2 * beta) on the token threshold.
double token_threshold_bound(double gpu_flops, double dtype_bytes, double pcie_bandwidth);
/// ceil(bound) + 1.
TokenCount estimate_token_threshold(double gpu_flops, double dtype_bytes, double pcie_bandwidth);

}  // namespace moesim
