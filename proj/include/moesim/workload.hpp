// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "moesim/core.hpp"
#include "moesim/rng.hpp"

namespace moesim {

enum class SkewMode { fixed, resample_uniform };

struct SkewSpec {
    double alpha = 0.0;
    std::vector<int> skewed_experts{0};
    SkewMode mode = SkewMode::fixed;
    // Bounds for resample_uniform; alpha is redrawn from [lo, hi] per batch.
    double lo = 0.0;
    double hi = 0.0;

    void validate(int num_experts) const;

    friend bool operator==(const SkewSpec&, const SkewSpec&) = default;
};

struct WorkloadSpec {
    int num_batches = 1;
    TokenCount tokens_per_gpu_per_batch = 1;
    SkewSpec skew;
    std::uint64_t seed = 0;

    void validate(int num_experts) const;

    friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

struct TraceBatch {
    std::int64_t batch_id = 0;
    double alpha_used = 0.0;
    std::vector<RoutingMatrix> layers;

    TokenCount tokens() const { return layers.empty() ? 0 : layers.front().total(); }

    friend bool operator==(const TraceBatch&, const TraceBatch&) = default;
};

struct Trace {
    int num_gpus = 0;
    int num_experts = 0;
    int num_layers = 0;
    std::string rng{Rng::kName};
    std::uint64_t seed = 0;
    std::vector<TraceBatch> batches;

    /// Checks dimensions and that every layer of a batch carries the same
    /// per-GPU row sums. Throws ValidationError.
    void validate() const;

    friend bool operator==(const Trace&, const Trace&) = default;
};

/// Skewed experts share `alpha` evenly; the rest share `1 - alpha` evenly.
/// An alpha below the skewed set's uniform share |skewed| / E yields the
/// uniform distribution.
std::vector<double> skew_probabilities(double alpha, std::span<const int> skewed, int num_experts);

/// Each row is an independent multinomial draw of `tokens_per_gpu` trials.
RoutingMatrix sample_routing(std::span<const double> probs, TokenCount tokens_per_gpu,
                             int num_gpus, Rng& rng);

Trace generate_trace(const WorkloadSpec& spec, const ModelSpec& model, int num_gpus);

// Line-delimited JSON: one header object, then one object per batch.
void write_trace(const Trace& t, std::ostream& out);
void write_trace(const Trace& t, const std::filesystem::path& path);
Trace read_trace(std::istream& in);
Trace read_trace(const std::filesystem::path& path);

}  // namespace moesim
