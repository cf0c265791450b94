// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include <omp.h>

#include <exception>
#include <mutex>

#include "engine_detail.hpp"

namespace moesim {

RunMetrics simulate_run_omp(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                            const SchedulerConfig& config, const SimFlags& flags, int threads) {
    const auto plan = detail::prepare_run(trace, model, cluster, config);
    const auto n = static_cast<long>(trace.batches.size());
    std::vector<detail::BatchOutcome> outcomes(static_cast<std::size_t>(n));

    std::exception_ptr failure;
    std::mutex failure_mutex;

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads > 0 ? threads : omp_get_max_threads())
    for (long b = 0; b < n; ++b) {
        try {
            outcomes[b] = detail::simulate_batch(trace.batches[b], plan.placements[b], model, cluster,
                                                 config, flags, plan.cost);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    return detail::merge_outcomes(trace, model, std::move(outcomes));
}

}  // namespace moesim
