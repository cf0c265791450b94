// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/core.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace moesim {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error(fmt::format("line {}: {}", line, what)), line_(line) {}

namespace {

void require_positive(double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError(fmt::format("{}: must be a finite positive number, got {}", field, v));
    }
}

}  // namespace

void ClusterSpec::validate() const {
    if (num_gpus < 1) {
        throw ValidationError(fmt::format("cluster.num_gpus: must be >= 1, got {}", num_gpus));
    }
    if (expert_slots_per_gpu < 2) {
        throw ValidationError(fmt::format(
            "cluster.expert_slots_per_gpu: at least two experts must fit per GPU, got {}",
            expert_slots_per_gpu));
    }
    require_positive(link_bandwidth, "cluster.link_bandwidth");
    require_positive(pcie_bandwidth, "cluster.pcie_bandwidth");
    require_positive(gpu_flops, "cluster.gpu_flops");
    if (!(link_latency >= 0.0) || !std::isfinite(link_latency)) {
        throw ValidationError(fmt::format("cluster.link_latency: must be >= 0, got {}", link_latency));
    }
}

void ModelSpec::validate() const {
    auto positive = [](int v, const char* field) {
        if (v < 1) throw ValidationError(fmt::format("{}: must be >= 1, got {}", field, v));
    };
    positive(num_layers, "model.num_layers");
    positive(num_experts, "model.num_experts");
    positive(d_model, "model.d_model");
    positive(d_ff, "model.d_ff");
    positive(dtype_bytes, "model.dtype_bytes");
    if (!(non_moe_layer_time >= 0.0) || !std::isfinite(non_moe_layer_time)) {
        throw ValidationError(
            fmt::format("model.non_moe_layer_time: must be >= 0, got {}", non_moe_layer_time));
    }
}

RoutingMatrix::RoutingMatrix(int num_gpus, int num_experts)
    : gpus_(num_gpus),
      experts_(num_experts),
      data_(static_cast<std::size_t>(num_gpus) * num_experts, 0) {
    if (num_gpus < 0 || num_experts < 0) throw ValidationError("RoutingMatrix: negative dimension");
}

TokenCount RoutingMatrix::row_sum(int gpu) const {
    auto r = row(gpu);
    return std::accumulate(r.begin(), r.end(), TokenCount{0});
}

TokenCount RoutingMatrix::total() const {
    return std::accumulate(data_.begin(), data_.end(), TokenCount{0});
}

std::vector<TokenCount> RoutingMatrix::expert_totals() const {
    std::vector<TokenCount> out(experts_, 0);
    for (int g = 0; g < gpus_; ++g)
        for (int e = 0; e < experts_; ++e) out[e] += at(g, e);
    return out;
}

ScheduleTensor::ScheduleTensor(int num_gpus, int num_experts)
    : gpus_(num_gpus),
      experts_(num_experts),
      data_(static_cast<std::size_t>(num_gpus) * num_experts * num_gpus, 0) {
    if (num_gpus < 0 || num_experts < 0) throw ValidationError("ScheduleTensor: negative dimension");
}

std::vector<int> Placement::experts_on(int gpu) const {
    std::vector<int> out;
    for (int e = 0; e < num_experts(); ++e)
        if (home[e] == gpu) out.push_back(e);
    return out;
}

std::vector<int> Placement::home_counts(int num_gpus) const {
    std::vector<int> counts(num_gpus, 0);
    for (int g : home) {
        if (g >= 0 && g < num_gpus) ++counts[g];
    }
    return counts;
}

void Placement::validate(int num_gpus, int slots) const {
    for (int e = 0; e < num_experts(); ++e) {
        if (home[e] < 0 || home[e] >= num_gpus) {
            throw ValidationError(
                fmt::format("placement: expert {} homed on invalid GPU {}", e, home[e]));
        }
    }
    auto counts = home_counts(num_gpus);
    for (int g = 0; g < num_gpus; ++g) {
        if (counts[g] > slots) {
            throw ValidationError(fmt::format(
                "placement: GPU {} hosts {} experts but only {} slots are available", g, counts[g],
                slots));
        }
    }
}

std::vector<TokenCount> load_per_gpu(const ScheduleTensor& s) {
    const int g_count = s.num_gpus();
    std::vector<TokenCount> load(g_count, 0);
    for (int from = 0; from < g_count; ++from)
        for (int e = 0; e < s.num_experts(); ++e)
            for (int to = 0; to < g_count; ++to) load[to] += s.at(from, e, to);
    return load;
}

TokenCount total_tokens(const ScheduleTensor& s) {
    auto raw = s.raw();
    return std::accumulate(raw.begin(), raw.end(), TokenCount{0});
}

bool validate_against(const ScheduleTensor& s, const RoutingMatrix& m) {
    if (s.num_gpus() != m.num_gpus() || s.num_experts() != m.num_experts()) {
        throw ValidationError(fmt::format(
            "validate_against: schedule is {}x{} but routing matrix is {}x{}", s.num_gpus(),
            s.num_experts(), m.num_gpus(), m.num_experts()));
    }
    for (int from = 0; from < s.num_gpus(); ++from) {
        for (int e = 0; e < s.num_experts(); ++e) {
            TokenCount sum = 0;
            for (int to = 0; to < s.num_gpus(); ++to) {
                if (s.at(from, e, to) < 0) return false;
                sum += s.at(from, e, to);
            }
            if (sum != m.at(from, e)) return false;
        }
    }
    return true;
}

}  // namespace moesim
