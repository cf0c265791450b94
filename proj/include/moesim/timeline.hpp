// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "moesim/core.hpp"

namespace moesim {

/// The categories partition a GPU's layer span, except expert_load_async
/// which runs on the transfer channel and may overlap compute.
enum class EventKind {
    schedule,
    metadata,
    scatter,
    compute,
    expert_load_sync,
    expert_load_async,
    gather,
    wait,
};
inline constexpr std::size_t kNumEventKinds = 8;
std::string_view to_string(EventKind k);
inline constexpr std::array<EventKind, kNumEventKinds> kAllEventKinds = {
    EventKind::schedule,         EventKind::metadata,          EventKind::scatter,
    EventKind::compute,          EventKind::expert_load_sync,  EventKind::expert_load_async,
    EventKind::gather,           EventKind::wait};

struct TimelineEvent {
    EventKind kind = EventKind::compute;
    double start = 0.0;
    double duration = 0.0;
    std::optional<int> expert;
    std::optional<TokenCount> tokens;

    double end() const { return start + duration; }
};

struct GpuTimeline {
    std::vector<TimelineEvent> events;
    double span = 0.0;

    double total(EventKind k) const;
};

}  // namespace moesim
