// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

// moesim: simulate expert-parallel MoE inference under different token
// scheduling policies.
//
//   moesim run <config.json> [--threads N] [--output-dir DIR]
//   moesim estimate-q --flops F --dtype-bytes D --pcie-bandwidth B
//   moesim sweep <config.json> --param alpha --values 0,0.5,0.9 [--policies a,b] [--jobs N]
//   moesim trace generate <config.json> --out trace.jsonl [--seed S]
//   moesim trace inspect <trace.jsonl>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "moesim/config.hpp"
#include "moesim/engine.hpp"
#include "moesim/report.hpp"
#include "moesim/sweep.hpp"

namespace {

using namespace moesim;

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kInternal = 4 };

int cmd_run(const std::string& config_path, int threads, const std::string& output_dir) {
    auto cfg = load_run_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;

    const auto started = std::chrono::steady_clock::now();
    const auto trace = materialize_trace(cfg);
    const auto metrics =
        threads > 1 ? simulate_run_omp(trace, cfg.model, cfg.cluster, cfg.scheduler, cfg.flags, threads)
                    : simulate_run(trace, cfg.model, cfg.cluster, cfg.scheduler, cfg.flags);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    write_reports(cfg, metrics, cfg.output_dir, wall);

    fmt::print("policy={} batches={} tokens={} throughput={:.6g} tok/s mean_ttft={:.6g} s -> {}\n",
               to_string(cfg.scheduler.policy), metrics.per_batch_latency.size(),
               metrics.total_tokens, throughput(metrics), mean_ttft(metrics), cfg.output_dir);
    return kOk;
}

int cmd_estimate_q(double flops, double dtype_bytes, double pcie_bandwidth) {
    const double bound = token_threshold_bound(flops, dtype_bytes, pcie_bandwidth);
    const auto q = estimate_token_threshold(flops, dtype_bytes, pcie_bandwidth);
    fmt::print("bound {}\nq {}\n", bound, q);
    return kOk;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::string& values,
              const std::string& policies, int jobs) {
    const auto base = load_run_config(config_path);
    SweepSpec spec;
    spec.param = param;
    spec.values = split_list(values);
    for (const auto& p : split_list(policies)) spec.policies.push_back(parse_policy(p));

    const auto cells = expand_sweep(base, spec);
    const auto results = jobs > 1 ? run_cells_omp(cells, jobs) : run_cells_serial(cells);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        write_reports(cells[i].config, results[i].metrics, cells[i].config.output_dir, 0.0);
    }

    std::filesystem::create_directories(base.output_dir);
    const auto csv = std::filesystem::path(base.output_dir) / "sweep.csv";
    std::ofstream out(csv, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", csv.string()));
    write_sweep_csv(results, out);
    out.close();
    if (!out) throw IoError(fmt::format("failed writing '{}'", csv.string()));

    fmt::print("{} cells -> {}\n", results.size(), csv.string());
    return kOk;
}

int cmd_trace_generate(const std::string& config_path, const std::string& out_path,
                       std::optional<std::uint64_t> seed) {
    auto cfg = load_run_config(config_path);
    if (!cfg.workload) throw ValidationError("workload: trace generation needs a workload section");
    if (seed) cfg.workload->seed = *seed;
    const auto trace = generate_trace(*cfg.workload, cfg.model, cfg.cluster.num_gpus);
    write_trace(trace, std::filesystem::path(out_path));
    fmt::print("wrote {} batches (G={}, E={}, L={}) to {}\n", trace.batches.size(), trace.num_gpus,
               trace.num_experts, trace.num_layers, out_path);
    return kOk;
}

int cmd_trace_inspect(const std::string& path) {
    const auto trace = read_trace(std::filesystem::path(path));
    fmt::print("num_gpus {}\nnum_experts {}\nnum_layers {}\nrng {}\nseed {}\nnum_batches {}\n",
               trace.num_gpus, trace.num_experts, trace.num_layers, trace.rng, trace.seed,
               trace.batches.size());
    for (const auto& b : trace.batches) {
        fmt::print("batch {} alpha {} tokens {} max_expert_share", b.batch_id, b.alpha_used, b.tokens());
        for (const auto& layer : b.layers) {
            const auto totals = layer.expert_totals();
            const auto total = layer.total();
            const auto top = totals.empty() ? 0 : *std::max_element(totals.begin(), totals.end());
            fmt::print(" {:.4f}", total > 0 ? static_cast<double>(top) / static_cast<double>(total) : 0.0);
        }
        fmt::print("\n");
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expert-parallel MoE inference scheduling simulator"};
    app.require_subcommand(1);

    std::string config_path;
    int threads = 1;
    std::string output_dir;
    auto* run = app.add_subcommand("run", "Simulate one configuration and write reports");
    run->add_option("config", config_path, "Run configuration (JSON)")->required();
    run->add_option("--threads", threads, "Simulate batches on N OpenMP threads")->check(CLI::PositiveNumber);
    run->add_option("--output-dir", output_dir, "Override output_dir from the config");

    double flops = 0.0;
    double dtype_bytes = 0.0;
    double pcie = 0.0;
    auto* est = app.add_subcommand("estimate-q", "Estimate the token threshold q");
    est->add_option("--flops", flops, "GPU throughput, FLOP/s")->required();
    est->add_option("--dtype-bytes", dtype_bytes, "Bytes per weight element")->required();
    est->add_option("--pcie-bandwidth", pcie, "Host-to-GPU bandwidth, bytes/s")->required();

    std::string param;
    std::string values;
    std::string policies;
    int jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Run a parameter grid");
    sweep->add_option("config", config_path, "Base configuration (JSON)")->required();
    sweep->add_option("--param", param, "alpha, q, policy or tokens_per_gpu")->required();
    sweep->add_option("--values", values, "Comma-separated values")->required();
    sweep->add_option("--policies", policies, "Comma-separated policies");
    sweep->add_option("--jobs", jobs, "Run cells on N OpenMP threads")->check(CLI::PositiveNumber);

    auto* trace = app.add_subcommand("trace", "Generate or inspect routing traces");
    trace->require_subcommand(1);
    std::string trace_out;
    std::optional<std::uint64_t> seed;
    auto* gen = trace->add_subcommand("generate", "Write a trace from a config's workload");
    gen->add_option("config", config_path, "Configuration with a workload section")->required();
    gen->add_option("--out,-o", trace_out, "Output trace path")->required();
    gen->add_option("--seed", seed, "Override workload.seed");
    std::string trace_path;
    auto* inspect = trace->add_subcommand("inspect", "Summarise a trace file");
    inspect->add_option("trace", trace_path, "Trace path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*run) return cmd_run(config_path, threads, output_dir);
        if (*est) return cmd_estimate_q(flops, dtype_bytes, pcie);
        if (*sweep) return cmd_sweep(config_path, param, values, policies, jobs);
        if (*gen) return cmd_trace_generate(config_path, trace_out, seed);
        if (*inspect) return cmd_trace_inspect(trace_path);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const InvariantError& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return kInternal;
    }
    return kUsage;
}
