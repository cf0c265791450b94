// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/policies.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moesim {

std::string_view to_string(Policy p) {
    switch (p) {
        case Policy::harmoeny: return "harmoeny";
        case Policy::round_robin: return "round_robin";
        case Policy::even_split: return "even_split";
        case Policy::affinity: return "affinity";
    }
    return "unknown";
}

std::string_view to_string(PlacementKind p) {
    switch (p) {
        case PlacementKind::round_robin: return "round_robin";
        case PlacementKind::blocked: return "blocked";
    }
    return "unknown";
}

Policy parse_policy(std::string_view name) {
    for (auto p : {Policy::harmoeny, Policy::round_robin, Policy::even_split, Policy::affinity}) {
        if (to_string(p) == name) return p;
    }
    throw ValidationError(fmt::format(
        "unknown policy '{}' (expected harmoeny, round_robin, even_split or affinity)", name));
}

PlacementKind parse_placement_kind(std::string_view name) {
    for (auto p : {PlacementKind::round_robin, PlacementKind::blocked}) {
        if (to_string(p) == name) return p;
    }
    throw ValidationError(
        fmt::format("unknown placement '{}' (expected round_robin or blocked)", name));
}

void SchedulerConfig::validate() const {
    if (token_threshold_q < 1) {
        throw ValidationError(fmt::format("scheduler.token_threshold_q: must be >= 1, got {}",
                                          token_threshold_q));
    }
    if (affinity_refresh_batches < 1) {
        throw ValidationError(fmt::format("scheduler.affinity_refresh_batches: must be >= 1, got {}",
                                          affinity_refresh_batches));
    }
}

Placement round_robin_placement(int num_experts, int num_gpus) {
    if (num_experts < 1 || num_gpus < 1) {
        throw ValidationError("round_robin_placement: need at least one expert and one GPU");
    }
    Placement p;
    p.home.resize(num_experts);
    for (int e = 0; e < num_experts; ++e) p.home[e] = e % num_gpus;
    return p;
}

Placement blocked_placement(int num_experts, int num_gpus) {
    if (num_experts < 1 || num_gpus < 1) {
        throw ValidationError("blocked_placement: need at least one expert and one GPU");
    }
    const int block = (num_experts + num_gpus - 1) / num_gpus;
    Placement p;
    p.home.resize(num_experts);
    for (int e = 0; e < num_experts; ++e) p.home[e] = std::min(e / block, num_gpus - 1);
    return p;
}

Placement make_placement(PlacementKind kind, int num_experts, int num_gpus) {
    return kind == PlacementKind::blocked ? blocked_placement(num_experts, num_gpus)
                                          : round_robin_placement(num_experts, num_gpus);
}

ScheduleTensor initial_assign(const RoutingMatrix& m_all, const Placement& placement) {
    if (placement.num_experts() != m_all.num_experts()) {
        throw ValidationError(fmt::format("initial_assign: placement covers {} experts, matrix has {}",
                                          placement.num_experts(), m_all.num_experts()));
    }
    placement.validate(m_all.num_gpus(), m_all.num_experts());
    ScheduleTensor s(m_all.num_gpus(), m_all.num_experts());
    for (int from = 0; from < m_all.num_gpus(); ++from)
        for (int e = 0; e < m_all.num_experts(); ++e) s.at(from, e, placement.home[e]) = m_all.at(from, e);
    return s;
}

namespace {

template <typename Range>
int argmax_lowest(const Range& values) {
    return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

template <typename Range>
int argmin_lowest(const Range& values) {
    return static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());
}

}  // namespace

RebalanceTrace rebalance_traced(const ScheduleTensor& s_initial, TokenCount q) {
    if (q < 1) throw ValidationError(fmt::format("rebalance: q must be >= 1, got {}", q));

    RebalanceTrace out{s_initial, {}, RebalanceExit::balanced};
    ScheduleTensor& s = out.schedule;
    const int num_gpus = s.num_gpus();
    const int num_experts = s.num_experts();
    if (num_gpus == 0) return out;

    const TokenCount t_avg = total_tokens(s) / num_gpus;
    std::vector<TokenCount> t_g = load_per_gpu(s);
    std::vector<TokenCount> from_sums(num_gpus);
    std::vector<TokenCount> expert_cells(num_experts);

    auto overloaded = [&] {
        return std::any_of(t_g.begin(), t_g.end(), [&](TokenCount t) { return t > t_avg; });
    };

    while (overloaded()) {
        const int g_max = argmax_lowest(t_g);

        for (int from = 0; from < num_gpus; ++from) {
            TokenCount sum = 0;
            for (int e = 0; e < num_experts; ++e) sum += s.at(from, e, g_max);
            from_sums[from] = sum;
        }
        const int g_from = argmax_lowest(from_sums);

        for (int e = 0; e < num_experts; ++e) expert_cells[e] = s.at(g_from, e, g_max);
        const int e_max = argmax_lowest(expert_cells);

        const TokenCount t_move = s.at(g_from, e_max, g_max);
        if (t_move < q) {
            out.exit = RebalanceExit::insufficient_tokens;
            return out;
        }

        const int g_min = argmin_lowest(t_g);
        if (g_min == g_max || t_g[g_min] + q > t_avg) {
            out.exit = RebalanceExit::no_feasible_transfer;
            return out;
        }

        const TokenCount t_s = std::min(t_move, t_avg - t_g[g_min]);
        s.at(g_from, e_max, g_max) -= t_s;
        s.at(g_from, e_max, g_min) += t_s;
        t_g[g_max] -= t_s;
        t_g[g_min] += t_s;
        out.moves.push_back({g_from, e_max, g_max, g_min, t_s});
    }
    return out;
}

ScheduleTensor rebalance(const ScheduleTensor& s_initial, TokenCount q) {
    return rebalance_traced(s_initial, q).schedule;
}

ScheduleTensor even_split_assign(const RoutingMatrix& m_all, int num_gpus) {
    if (num_gpus != m_all.num_gpus()) {
        throw ValidationError(fmt::format("even_split_assign: matrix has {} GPUs, asked for {}",
                                          m_all.num_gpus(), num_gpus));
    }
    ScheduleTensor s(num_gpus, m_all.num_experts());
    for (int e = 0; e < m_all.num_experts(); ++e) {
        // Leftover tokens of successive sources continue round the GPUs from
        // where the previous source stopped, so each expert adds at most one
        // token of imbalance per GPU.
        int cursor = 0;
        for (int from = 0; from < num_gpus; ++from) {
            const TokenCount c = m_all.at(from, e);
            const TokenCount base = c / num_gpus;
            const auto rem = static_cast<int>(c % num_gpus);
            for (int to = 0; to < num_gpus; ++to) s.at(from, e, to) = base;
            for (int k = 0; k < rem; ++k) ++s.at(from, e, (cursor + k) % num_gpus);
            cursor = (cursor + rem) % num_gpus;
        }
    }
    return s;
}

Placement affinity_placement(const PopularityProfile& profile, int num_gpus, int slots) {
    const auto num_experts = static_cast<int>(profile.tokens_per_expert.size());
    if (num_experts < 1 || num_gpus < 1 || slots < 1) {
        throw ValidationError("affinity_placement: empty profile or no capacity");
    }
    if (static_cast<long long>(num_experts) > static_cast<long long>(num_gpus) * slots) {
        throw ValidationError(fmt::format("affinity_placement: {} experts do not fit in {} GPUs x {} slots",
                                          num_experts, num_gpus, slots));
    }
    for (auto t : profile.tokens_per_expert) {
        if (t < 0) throw ValidationError("affinity_placement: negative popularity");
    }

    std::vector<int> order(num_experts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return profile.tokens_per_expert[a] > profile.tokens_per_expert[b];
    });

    std::vector<TokenCount> mass(num_gpus, 0);
    std::vector<int> used(num_gpus, 0);
    Placement p;
    p.home.assign(num_experts, -1);
    for (int e : order) {
        int best = -1;
        for (int g = 0; g < num_gpus; ++g) {
            if (used[g] >= slots) continue;
            if (best < 0 || mass[g] < mass[best]) best = g;
        }
        p.home[e] = best;
        mass[best] += profile.tokens_per_expert[e];
        ++used[best];
    }
    return p;
}

double token_threshold_bound(double gpu_flops, double dtype_bytes, double pcie_bandwidth) {
    auto check = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ValidationError(fmt::format("{}: must be a finite positive number, got {}", name, v));
        }
    };
    check(gpu_flops, "gpu_flops");
    check(dtype_bytes, "dtype_bytes");
    check(pcie_bandwidth, "pcie_bandwidth");
    return gpu_flops * dtype_bytes / (2.0 * pcie_bandwidth);
}

TokenCount estimate_token_threshold(double gpu_flops, double dtype_bytes, double pcie_bandwidth) {
    const double bound = token_threshold_bound(gpu_flops, dtype_bytes, pcie_bandwidth);
    const double q = std::ceil(bound) + 1.0;
    if (q > 9.0e18) throw ValidationError("token threshold overflows a 64-bit count");
    return std::max<TokenCount>(1, static_cast<TokenCount>(q));
}

}  // namespace moesim
