// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

// Test-only oracles. Nothing here calls into the scheduling code it is used
// to check; loads are recomputed from raw tensor entries and the reference
// rebalancer works on nested vectors with its own bookkeeping.

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "moesim/core.hpp"

namespace moesim::oracle {

using Cube = std::vector<std::vector<std::vector<TokenCount>>>;  // [from][e][to]

inline Cube to_cube(const ScheduleTensor& s) {
    Cube c(s.num_gpus(), std::vector<std::vector<TokenCount>>(s.num_experts(),
                                                              std::vector<TokenCount>(s.num_gpus())));
    for (int f = 0; f < s.num_gpus(); ++f)
        for (int e = 0; e < s.num_experts(); ++e)
            for (int t = 0; t < s.num_gpus(); ++t) c[f][e][t] = s.at(f, e, t);
    return c;
}

inline std::vector<TokenCount> brute_loads(const Cube& c) {
    const auto g = c.size();
    std::vector<TokenCount> loads(g, 0);
    for (const auto& per_expert : c)
        for (const auto& row : per_expert)
            for (std::size_t t = 0; t < g; ++t) loads[t] += row[t];
    return loads;
}

inline TokenCount brute_total(const Cube& c) {
    TokenCount sum = 0;
    for (auto v : brute_loads(c)) sum += v;
    return sum;
}

/// Straight transcription of the greedy rebalancing loop, recomputing every
/// aggregate from scratch on each pass. Returns the iteration count via `iters`.
inline Cube reference_rebalance(Cube s, TokenCount q, long* iters = nullptr) {
    const int g = static_cast<int>(s.size());
    const int ne = g ? static_cast<int>(s[0].size()) : 0;
    const TokenCount avg = g ? brute_total(s) / g : 0;
    long count = 0;
    auto first_max = [](const std::vector<TokenCount>& v) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(v.size()); ++i)
            if (v[i] > v[best]) best = i;
        return best;
    };
    auto first_min = [](const std::vector<TokenCount>& v) {
        int best = 0;
        for (int i = 1; i < static_cast<int>(v.size()); ++i)
            if (v[i] < v[best]) best = i;
        return best;
    };
    while (true) {
        auto loads = brute_loads(s);
        bool over = false;
        for (auto l : loads) over = over || l > avg;
        if (!over) break;
        const int gmax = first_max(loads);
        std::vector<TokenCount> by_source(g, 0);
        for (int f = 0; f < g; ++f)
            for (int e = 0; e < ne; ++e) by_source[f] += s[f][e][gmax];
        const int from = first_max(by_source);
        std::vector<TokenCount> by_expert(ne);
        for (int e = 0; e < ne; ++e) by_expert[e] = s[from][e][gmax];
        const int emax = first_max(by_expert);
        const TokenCount move = s[from][emax][gmax];
        if (move < q) break;
        const int gmin = first_min(loads);
        if (gmin == gmax || loads[gmin] + q > avg) break;
        const TokenCount ts = std::min(move, avg - loads[gmin]);
        s[from][emax][gmax] -= ts;
        s[from][emax][gmin] += ts;
        ++count;
    }
    if (iters) *iters = count;
    return s;
}

/// Random routing matrix with up to `max_tokens` tokens in total and a
/// skewed expert distribution so rebalancing has work to do.
inline RoutingMatrix random_routing(std::mt19937_64& rng, int g, int e, TokenCount max_tokens) {
    RoutingMatrix m(g, e);
    std::uniform_int_distribution<TokenCount> total_dist(0, max_tokens);
    std::uniform_int_distribution<int> expert_dist(0, e - 1);
    std::uniform_int_distribution<int> gpu_dist(0, g - 1);
    const TokenCount total = total_dist(rng);
    const int hot = expert_dist(rng);
    std::bernoulli_distribution pick_hot(std::uniform_real_distribution<double>(0.0, 0.95)(rng));
    for (TokenCount t = 0; t < total; ++t) {
        const int expert = pick_hot(rng) ? hot : expert_dist(rng);
        ++m.at(gpu_dist(rng), expert);
    }
    return m;
}

inline Placement random_placement(std::mt19937_64& rng, int e, int g) {
    Placement p;
    p.home.resize(e);
    std::uniform_int_distribution<int> gpu_dist(0, g - 1);
    for (auto& h : p.home) h = gpu_dist(rng);
    return p;
}

}  // namespace moesim::oracle
