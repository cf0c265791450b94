// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <array>
#include <vector>

#include "moesim/engine.hpp"

namespace moesim::detail {

struct BatchOutcome {
    double latency = 0.0;
    int swaps = 0;
    std::vector<double> layer_latencies;
    std::vector<std::vector<TokenCount>> gpu_loads;
    // [layer][gpu] category seconds.
    std::vector<std::vector<std::array<double, kNumEventKinds>>> categories;
};

struct RunPlan {
    CostModel cost;
    std::vector<std::vector<Placement>> placements;  // [batch][layer]
};

/// Validates dimensions and precomputes per-(batch, layer) placements.
RunPlan prepare_run(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                    const SchedulerConfig& config);

BatchOutcome simulate_batch(const TraceBatch& batch, const std::vector<Placement>& placements,
                            const ModelSpec& model, const ClusterSpec& cluster,
                            const SchedulerConfig& config, const SimFlags& flags,
                            const CostModel& cost);

/// Folds outcomes into RunMetrics strictly in batch order.
RunMetrics merge_outcomes(const Trace& trace, const ModelSpec& model,
                          std::vector<BatchOutcome>&& outcomes);

}  // namespace moesim::detail
