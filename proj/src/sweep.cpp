// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/sweep.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <omp.h>

#include <charconv>
#include <exception>
#include <mutex>
#include <ostream>

#include "moesim/engine.hpp"

namespace moesim {

namespace {

template <typename T>
T parse_number(const std::string& text, const std::string& param) {
    T v{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end) {
        throw ValidationError(fmt::format("sweep: value '{}' is not a valid {}", text, param));
    }
    return v;
}

}  // namespace

std::vector<SweepCell> expand_sweep(const RunConfig& base, const SweepSpec& spec) {
    const auto& p = spec.param;
    if (p != "alpha" && p != "q" && p != "policy" && p != "tokens_per_gpu") {
        throw ValidationError(fmt::format(
            "sweep: unknown parameter '{}' (expected alpha, q, policy or tokens_per_gpu)", p));
    }
    if (spec.values.empty()) throw ValidationError("sweep: --values must not be empty");
    if ((p == "alpha" || p == "tokens_per_gpu") && !base.workload) {
        throw ValidationError(fmt::format("sweep: '{}' needs a workload, not a trace", p));
    }

    std::vector<SweepCell> cells;
    auto add = [&](Policy policy, const std::string& value) {
        SweepCell cell;
        cell.policy = policy;
        cell.value = value;
        cell.config = base;
        cell.config.scheduler.policy = policy;
        if (p == "alpha") {
            auto& skew = cell.config.workload->skew;
            skew.alpha = parse_number<double>(value, "alpha");
            skew.mode = SkewMode::fixed;
        } else if (p == "q") {
            cell.config.scheduler.token_threshold_q = parse_number<TokenCount>(value, "q");
        } else if (p == "tokens_per_gpu") {
            cell.config.workload->tokens_per_gpu_per_batch =
                parse_number<TokenCount>(value, "tokens_per_gpu");
        }
        cell.name = p == "policy" ? std::string(to_string(policy))
                                  : fmt::format("{}__{}={}", to_string(policy), p, value);
        cell.config.output_dir = base.output_dir + "/" + cell.name;
        try {
            cell.config.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("sweep cell {}: {}", cell.name, e.what()));
        }
        cells.push_back(std::move(cell));
    };

    if (p == "policy") {
        for (const auto& v : spec.values) add(parse_policy(v), v);
    } else {
        const std::vector<Policy> policies =
            spec.policies.empty() ? std::vector<Policy>{base.scheduler.policy} : spec.policies;
        for (auto policy : policies)
            for (const auto& v : spec.values) add(policy, v);
    }
    return cells;
}

CellResult run_cell(const SweepCell& cell) {
    const auto trace = materialize_trace(cell.config);
    CellResult r;
    r.policy = cell.policy;
    r.value = cell.value;
    r.name = cell.name;
    r.metrics = simulate_run(trace, cell.config.model, cell.config.cluster, cell.config.scheduler,
                             cell.config.flags);
    r.throughput = throughput(r.metrics);
    r.mean_ttft = mean_ttft(r.metrics);
    if (r.metrics.per_batch_throughput.size() >= 2) r.variance = throughput_variance(r.metrics);
    return r;
}

std::vector<CellResult> run_cells_serial(const std::vector<SweepCell>& cells) {
    std::vector<CellResult> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.push_back(run_cell(c));
    return out;
}

std::vector<CellResult> run_cells_omp(const std::vector<SweepCell>& cells, int jobs) {
    std::vector<CellResult> out(cells.size());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto n = static_cast<long>(cells.size());

#pragma omp parallel for schedule(dynamic, 1) num_threads(jobs > 0 ? jobs : omp_get_max_threads())
    for (long i = 0; i < n; ++i) {
        try {
            out[i] = run_cell(cells[i]);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

void write_sweep_csv(const std::vector<CellResult>& results, std::ostream& out) {
    out << "policy,value,throughput,mean_ttft,variance\n";
    for (const auto& r : results) {
        fmt::print(out, "{},{},{},{},{}\n", to_string(r.policy), r.value, r.throughput, r.mean_ttft,
                   r.variance ? fmt::format("{}", *r.variance) : std::string());
    }
}

}  // namespace moesim
