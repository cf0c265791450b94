// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace moesim {

using TokenCount = std::int64_t;

// Error taxonomy shared by the library and the CLI. The CLI maps each type to
// an exit code (validation 2, I/O 3, invariant 4).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct ClusterSpec {
    int num_gpus = 1;
    int expert_slots_per_gpu = 2;
    double link_bandwidth = 150e9;  // bytes/s, GPU-to-GPU
    double link_latency = 1e-5;     // s per all-to-all step
    double pcie_bandwidth = 16e9;   // bytes/s, host-to-GPU (beta)
    double gpu_flops = 14e12;       // FLOP/s (phi)

    // Throws ValidationError naming the offending field.
    void validate() const;

    friend bool operator==(const ClusterSpec&, const ClusterSpec&) = default;
};

struct ModelSpec {
    int num_layers = 1;
    int num_experts = 1;
    int d_model = 1;
    int d_ff = 1;
    int dtype_bytes = 2;
    double non_moe_layer_time = 0.0;

    /// Bytes of one two-layer expert: (m*p + p*m) * dtype.
    double expert_bytes() const {
        return 2.0 * static_cast<double>(d_model) * static_cast<double>(d_ff) *
               static_cast<double>(dtype_bytes);
    }

    void validate() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// G x E token counts: counts[g][e] tokens on source GPU g routed to expert e.
class RoutingMatrix {
public:
    RoutingMatrix() = default;
    RoutingMatrix(int num_gpus, int num_experts);

    int num_gpus() const noexcept { return gpus_; }
    int num_experts() const noexcept { return experts_; }

    TokenCount& at(int gpu, int expert) { return data_[index(gpu, expert)]; }
    TokenCount at(int gpu, int expert) const { return data_[index(gpu, expert)]; }

    std::span<const TokenCount> row(int gpu) const {
        return {data_.data() + static_cast<std::size_t>(gpu) * experts_,
                static_cast<std::size_t>(experts_)};
    }

    TokenCount row_sum(int gpu) const;
    TokenCount total() const;
    /// Per-expert totals summed over source GPUs.
    std::vector<TokenCount> expert_totals() const;

    friend bool operator==(const RoutingMatrix&, const RoutingMatrix&) = default;

private:
    std::size_t index(int gpu, int expert) const {
        return static_cast<std::size_t>(gpu) * experts_ + expert;
    }

    int gpus_ = 0;
    int experts_ = 0;
    std::vector<TokenCount> data_;
};

/// G x E x G tensor: at(from, e, to) tokens originating on `from`, routed to
/// expert `e`, executed on `to`.
class ScheduleTensor {
public:
    ScheduleTensor() = default;
    ScheduleTensor(int num_gpus, int num_experts);

    int num_gpus() const noexcept { return gpus_; }
    int num_experts() const noexcept { return experts_; }

    TokenCount& at(int from, int expert, int to) { return data_[index(from, expert, to)]; }
    TokenCount at(int from, int expert, int to) const { return data_[index(from, expert, to)]; }

    std::span<const TokenCount> raw() const { return data_; }

    friend bool operator==(const ScheduleTensor&, const ScheduleTensor&) = default;

private:
    std::size_t index(int from, int expert, int to) const {
        return (static_cast<std::size_t>(from) * experts_ + expert) * gpus_ + to;
    }

    int gpus_ = 0;
    int experts_ = 0;
    std::vector<TokenCount> data_;
};

/// Static expert -> home GPU assignment.
struct Placement {
    std::vector<int> home;

    int num_experts() const noexcept { return static_cast<int>(home.size()); }
    /// Experts homed on `gpu`, ascending.
    std::vector<int> experts_on(int gpu) const;
    std::vector<int> home_counts(int num_gpus) const;

    /// Every expert has a home in [0, num_gpus) and no GPU exceeds `slots`.
    void validate(int num_gpus, int slots) const;

    friend bool operator==(const Placement&, const Placement&) = default;
};

std::vector<TokenCount> load_per_gpu(const ScheduleTensor& s);
TokenCount total_tokens(const ScheduleTensor& s);

/// True iff for every (source, expert) the tokens spread over destinations
/// equal the routed count. Throws ValidationError on shape mismatch.
bool validate_against(const ScheduleTensor& s, const RoutingMatrix& m);

}  // namespace moesim
