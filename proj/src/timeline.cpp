// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/timeline.hpp"

namespace moesim {

std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::schedule: return "schedule";
        case EventKind::metadata: return "metadata";
        case EventKind::scatter: return "scatter";
        case EventKind::compute: return "compute";
        case EventKind::expert_load_sync: return "expert_load_sync";
        case EventKind::expert_load_async: return "expert_load_async";
        case EventKind::gather: return "gather";
        case EventKind::wait: return "wait";
    }
    return "unknown";
}

double GpuTimeline::total(EventKind k) const {
    double sum = 0.0;
    for (const auto& e : events)
        if (e.kind == k) sum += e.duration;
    return sum;
}

}  // namespace moesim
