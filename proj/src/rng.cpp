// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/rng.hpp"

#include "moesim/core.hpp"

namespace moesim {

AliasTable::AliasTable(std::span<const double> probs)
    : prob_(probs.size(), 0.0), alias_(probs.size(), 0) {
    const std::size_t n = probs.size();
    if (n == 0) throw ValidationError("alias table: empty distribution");

    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw ValidationError("alias table: negative probability");
        sum += p;
    }
    if (!(sum > 0.0)) throw ValidationError("alias table: probabilities sum to zero");

    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small;
    std::vector<std::uint32_t> large;
    for (std::size_t i = 0; i < n; ++i) {
        scaled[i] = probs[i] / sum * static_cast<double>(n);
        (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
        const auto s = small.back();
        small.pop_back();
        const auto l = large.back();
        prob_[s] = scaled[s];
        alias_[s] = l;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if (scaled[l] < 1.0) {
            large.pop_back();
            small.push_back(l);
        }
    }
    // Leftovers are 1 up to rounding.
    for (auto i : large) {
        prob_[i] = 1.0;
        alias_[i] = i;
    }
    for (auto i : small) {
        prob_[i] = scaled[i] > 0.0 ? 1.0 : 0.0;
        alias_[i] = i;
    }
    // A zero-probability column left over from rounding must never be selected.
    for (std::size_t i = 0; i < n; ++i) {
        if (probs[i] == 0.0 && alias_[i] == i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (probs[j] > 0.0) {
                    alias_[i] = static_cast<std::uint32_t>(j);
                    prob_[i] = 0.0;
                    break;
                }
            }
        }
    }
}

std::size_t AliasTable::sample(Rng& rng) const {
    const double u = rng.uniform01() * static_cast<double>(prob_.size());
    auto column = static_cast<std::size_t>(u);
    if (column >= prob_.size()) column = prob_.size() - 1;
    const double frac = u - static_cast<double>(column);
    return frac < prob_[column] ? column : alias_[column];
}

}  // namespace moesim
