// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/report.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <ostream>

namespace moesim {

using nlohmann::json;

void write_batches_csv(const RunMetrics& m, std::ostream& out) {
    out << "batch_id,alpha,latency_s,throughput_tok_s,expert_swaps\n";
    for (std::size_t b = 0; b < m.per_batch_latency.size(); ++b) {
        fmt::print(out, "{},{},{},{},{}\n", b, m.per_batch_alpha[b], m.per_batch_latency[b],
                   m.per_batch_throughput[b], m.expert_swaps_per_batch[b]);
    }
}

void write_breakdown_csv(const RunMetrics& m, std::ostream& out) {
    out << "layer,gpu,category,seconds\n";
    const auto& b = m.per_layer_breakdown;
    for (int l = 0; l < b.num_layers(); ++l)
        for (int g = 0; g < b.num_gpus(); ++g)
            for (auto k : kAllEventKinds) fmt::print(out, "{},{},{},{}\n", l, g, to_string(k), b.at(l, g, k));
}

namespace {

void write_series(std::ostream& out, const char* name,
                  const std::vector<std::vector<TokenCount>>& groups) {
    std::vector<TokenCount> pooled;
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
    if (pooled.empty()) return;
    for (const auto& p : load_ecdf(pooled)) fmt::print(out, "{},{},{}\n", name, p.value, p.fraction);
}

}  // namespace

void write_ecdf_csv(const RunMetrics& m, std::ostream& out) {
    out << "series,value,fraction\n";
    write_series(out, "gpu_load", m.per_gpu_token_loads);
    write_series(out, "expert_load", m.per_expert_token_loads);
}

json summary_json(const RunConfig& c, const RunMetrics& m, double wall_clock_seconds) {
    json s;
    s["config"] = to_json(c);
    s["num_batches"] = m.per_batch_latency.size();
    s["total_tokens"] = m.total_tokens;
    s["duration_s"] = m.duration;
    s["throughput_tok_s"] = m.duration > 0.0 ? json(throughput(m)) : json(nullptr);
    s["mean_ttft_s"] = m.per_batch_latency.empty() ? json(nullptr) : json(mean_ttft(m));
    s["throughput_variance"] =
        m.per_batch_throughput.size() >= 2 ? json(throughput_variance(m)) : json(nullptr);
    s["mean_layer_latency_s"] = m.layer_latencies.empty() ? json(nullptr) : json(mean_layer_latency(m));
    long long swaps = 0;
    for (int v : m.expert_swaps_per_batch) swaps += v;
    s["expert_swaps"] = swaps;
    json waits = json::array();
    for (int g = 0; g < m.num_gpus; ++g) {
        waits.push_back(m.per_layer_breakdown.gpu_span(g) > 0.0
                            ? json(wait_fraction(m.per_layer_breakdown, g))
                            : json(nullptr));
    }
    s["wait_fractions"] = waits;
    s["notes"] = {
        {"ttft", "single forward pass per batch; mean_ttft_s is the mean batch forward latency"},
        {"execution_order",
         "per GPU: resident experts first, then fetched experts; each by descending tokens, "
         "lowest index on ties"}};
    s["wall_clock_seconds"] = wall_clock_seconds;
    return s;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", p.string()));
    return out;
}

void close_checked(std::ofstream& out, const std::filesystem::path& p) {
    out.close();
    if (!out) throw IoError(fmt::format("failed writing '{}'", p.string()));
}

}  // namespace

void write_reports(const RunConfig& c, const RunMetrics& m, const std::filesystem::path& dir,
                   double wall_clock_seconds) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));

    auto emit = [&](const char* name, auto&& writer) {
        const auto p = dir / name;
        auto out = open_out(p);
        writer(out);
        close_checked(out, p);
    };
    emit("summary.json",
         [&](std::ostream& o) { o << summary_json(c, m, wall_clock_seconds).dump(2) << '\n'; });
    emit("batches.csv", [&](std::ostream& o) { write_batches_csv(m, o); });
    emit("breakdown.csv", [&](std::ostream& o) { write_breakdown_csv(m, o); });
    emit("ecdf.csv", [&](std::ostream& o) { write_ecdf_csv(m, o); });
}

}  // namespace moesim
