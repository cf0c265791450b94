// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/engine.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <limits>

#include "engine_detail.hpp"

namespace moesim {

CostModel CostModel::from(const ClusterSpec& cluster, const ModelSpec& model) {
    CostModel c;
    c.d_model = model.d_model;
    c.d_ff = model.d_ff;
    c.dtype_bytes = model.dtype_bytes;
    c.gpu_flops = cluster.gpu_flops;
    c.pcie_bandwidth = cluster.pcie_bandwidth;
    c.metadata_time = 4096.0 / cluster.link_bandwidth + cluster.link_latency;
    return c;
}

double CostModel::expert_flops(TokenCount n) const {
    const auto tokens = static_cast<double>(n);
    return tokens * d_ff * (2.0 * d_model - 1.0) + tokens * d_model * (2.0 * d_ff - 1.0);
}

double all_to_all_time(std::span<const double> bytes_out, std::span<const double> bytes_in,
                       const ClusterSpec& cluster) {
    if (bytes_out.size() != bytes_in.size()) {
        throw ValidationError("all_to_all_time: byte vectors differ in length");
    }
    double busiest = 0.0;
    for (std::size_t g = 0; g < bytes_out.size(); ++g) {
        if (bytes_out[g] < 0.0 || bytes_in[g] < 0.0) {
            throw ValidationError("all_to_all_time: negative byte count");
        }
        busiest = std::max({busiest, bytes_out[g], bytes_in[g]});
    }
    return cluster.link_latency + busiest / cluster.link_bandwidth;
}

ExecutionPlan plan_gpu_execution(std::span<const ExpertWork> work, std::span<const int> resident,
                                 int slots, const SimFlags& flags, const CostModel& cost) {
    if (slots < 2) throw ValidationError("plan_gpu_execution: need at least two expert slots");
    if (static_cast<int>(resident.size()) > slots) {
        throw ValidationError(fmt::format("plan_gpu_execution: {} resident experts exceed {} slots",
                                          resident.size(), slots));
    }

    auto is_resident = [&](int e) {
        return std::find(resident.begin(), resident.end(), e) != resident.end();
    };
    std::vector<ExpertWork> local;
    std::vector<ExpertWork> remote;
    for (const auto& w : work) {
        if (w.tokens <= 0) continue;
        (is_resident(w.expert) ? local : remote).push_back(w);
    }
    auto by_tokens = [](const ExpertWork& a, const ExpertWork& b) {
        return a.tokens != b.tokens ? a.tokens > b.tokens : a.expert < b.expert;
    };
    std::sort(local.begin(), local.end(), by_tokens);
    std::sort(remote.begin(), remote.end(), by_tokens);

    constexpr double kBusy = std::numeric_limits<double>::infinity();
    // Slot i holds an expert (or -1) and the instant it becomes overwritable.
    struct Slot {
        int expert;
        double free_at;
    };
    std::vector<Slot> cache(slots, Slot{-1, 0.0});
    for (std::size_t i = 0; i < resident.size(); ++i) {
        const bool has_work = std::any_of(local.begin(), local.end(),
                                          [&](const ExpertWork& w) { return w.expert == resident[i]; });
        cache[i] = {resident[i], has_work ? kBusy : 0.0};
    }

    ExecutionPlan plan;
    double compute_free = 0.0;
    double channel_free = 0.0;
    const double load = cost.expert_load_time();

    auto run_compute = [&](const ExpertWork& w, double start) {
        const double d = cost.expert_compute_time(w.tokens);
        plan.events.push_back({EventKind::compute, start, d, w.expert, w.tokens});
        plan.order.push_back(w.expert);
        compute_free = start + d;
    };

    for (const auto& w : local) {
        run_compute(w, compute_free);
        for (auto& s : cache)
            if (s.expert == w.expert) s.free_at = compute_free;
    }

    for (const auto& w : remote) {
        auto slot = std::min_element(cache.begin(), cache.end(), [](const Slot& a, const Slot& b) {
            return a.free_at < b.free_at;
        });
        if (slot->free_at == kBusy) {
            throw InvariantError("plan_gpu_execution: no slot can ever be overwritten");
        }
        double ready = 0.0;
        if (flags.async_loading_enabled) {
            const double start = std::max(channel_free, slot->free_at);
            plan.events.push_back({EventKind::expert_load_async, start, load, w.expert, std::nullopt});
            channel_free = start + load;
            ready = channel_free;
            if (ready > compute_free) {
                plan.events.push_back(
                    {EventKind::wait, compute_free, ready - compute_free, std::nullopt, std::nullopt});
            }
            ready = std::max(ready, compute_free);
        } else {
            const double start = std::max(compute_free, slot->free_at);
            if (start > compute_free) {
                plan.events.push_back(
                    {EventKind::wait, compute_free, start - compute_free, std::nullopt, std::nullopt});
            }
            plan.events.push_back({EventKind::expert_load_sync, start, load, w.expert, std::nullopt});
            ready = start + load;
        }
        ++plan.fetches;
        run_compute(w, ready);
        *slot = {w.expert, compute_free};
    }

    plan.end = compute_free;
    return plan;
}

ScheduleTensor schedule_layer(const RoutingMatrix& m_all, const Placement& placement,
                              const SchedulerConfig& config, const SimFlags& flags) {
    switch (config.policy) {
        case Policy::even_split: return even_split_assign(m_all, m_all.num_gpus());
        case Policy::harmoeny: {
            auto s = initial_assign(m_all, placement);
            return flags.rebalancing_enabled ? rebalance(s, config.token_threshold_q) : s;
        }
        case Policy::round_robin:
        case Policy::affinity: return initial_assign(m_all, placement);
    }
    throw InvariantError("schedule_layer: unknown policy");
}

LayerResult simulate_layer(const RoutingMatrix& m_all, const Placement& placement,
                           const SchedulerConfig& config, const SimFlags& flags,
                           const CostModel& cost, const ClusterSpec& cluster) {
    const int num_gpus = cluster.num_gpus;
    const int num_experts = m_all.num_experts();
    if (m_all.num_gpus() != num_gpus || placement.num_experts() != num_experts) {
        throw ValidationError(fmt::format(
            "simulate_layer: routing matrix {}x{} does not match {} GPUs / placement of {} experts",
            m_all.num_gpus(), num_experts, num_gpus, placement.num_experts()));
    }
    placement.validate(num_gpus, cluster.expert_slots_per_gpu);

    LayerResult r;
    const auto t0 = std::chrono::steady_clock::now();
    r.schedule = schedule_layer(m_all, placement, config, flags);
    const auto t1 = std::chrono::steady_clock::now();
    r.scheduler_wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.gpu_loads = load_per_gpu(r.schedule);

    const double t_meta = cost.metadata_time;
    const double t_sched = flags.include_scheduler_walltime ? r.scheduler_wall_seconds : 0.0;

    // Tokens that stay on their source GPU never touch the link.
    std::vector<double> sent(num_gpus, 0.0);
    std::vector<double> received(num_gpus, 0.0);
    for (int from = 0; from < num_gpus; ++from) {
        for (int e = 0; e < num_experts; ++e) {
            for (int to = 0; to < num_gpus; ++to) {
                if (from == to) continue;
                const double bytes = static_cast<double>(r.schedule.at(from, e, to)) * cost.token_bytes();
                sent[from] += bytes;
                received[to] += bytes;
            }
        }
    }
    const bool exchange = num_gpus > 1;
    const double t_scatter = exchange ? all_to_all_time(sent, received, cluster) : 0.0;
    // Results travel back along the reverse paths.
    const double t_gather = exchange ? all_to_all_time(received, sent, cluster) : 0.0;

    const double step5_start = t_meta + t_sched + t_scatter;
    r.scatter_barrier = step5_start;

    std::vector<ExecutionPlan> plans;
    plans.reserve(num_gpus);
    std::vector<ExpertWork> work;
    for (int g = 0; g < num_gpus; ++g) {
        work.clear();
        for (int e = 0; e < num_experts; ++e) {
            TokenCount n = 0;
            for (int from = 0; from < num_gpus; ++from) n += r.schedule.at(from, e, g);
            if (n > 0) work.push_back({e, n});
        }
        const auto resident = placement.experts_on(g);
        plans.push_back(plan_gpu_execution(work, resident, cluster.expert_slots_per_gpu, flags, cost));
        r.expert_swaps += plans.back().fetches;
    }

    double barrier = step5_start;
    for (const auto& p : plans) barrier = std::max(barrier, step5_start + p.end);
    r.gather_barrier = barrier;
    r.layer_latency = barrier + t_gather;

    r.gpus.resize(num_gpus);
    for (int g = 0; g < num_gpus; ++g) {
        auto& events = r.gpus[g].events;
        auto push = [&](EventKind k, double start, double d) {
            if (d > 0.0) events.push_back({k, start, d, std::nullopt, std::nullopt});
        };
        push(EventKind::metadata, 0.0, t_meta);
        push(EventKind::schedule, t_meta, t_sched);
        push(EventKind::scatter, t_meta + t_sched, t_scatter);
        for (auto e : plans[g].events) {
            e.start += step5_start;
            events.push_back(e);
        }
        const double own_end = step5_start + plans[g].end;
        push(EventKind::wait, own_end, barrier - own_end);
        push(EventKind::gather, barrier, t_gather);
        r.gpus[g].span = r.layer_latency;
    }
    return r;
}

std::vector<std::vector<Placement>> plan_placements(const Trace& trace, const ModelSpec& model,
                                                    const ClusterSpec& cluster,
                                                    const SchedulerConfig& config) {
    const int num_gpus = cluster.num_gpus;
    const int num_experts = model.num_experts;
    const int num_layers = model.num_layers;
    const auto num_batches = trace.batches.size();

    std::vector<std::vector<Placement>> out(num_batches);
    if (config.policy != Policy::affinity) {
        const Placement fixed =
            config.policy == Policy::round_robin
                ? round_robin_placement(num_experts, num_gpus)
                : make_placement(config.placement, num_experts, num_gpus);
        for (auto& layers : out) layers.assign(num_layers, fixed);
        return out;
    }

    // Before any profile exists every expert is equally popular.
    std::vector<Placement> current(
        num_layers,
        affinity_placement({std::vector<TokenCount>(num_experts, 0), 0}, num_gpus,
                           cluster.expert_slots_per_gpu));
    const int period = config.affinity_refresh_batches;
    for (std::size_t b = 0; b < num_batches; ++b) {
        if (b > 0 && b % period == 0) {
            for (int l = 0; l < num_layers; ++l) {
                PopularityProfile profile{std::vector<TokenCount>(num_experts, 0), period};
                for (std::size_t w = b - period; w < b; ++w) {
                    const auto totals = trace.batches[w].layers[l].expert_totals();
                    for (int e = 0; e < num_experts; ++e) profile.tokens_per_expert[e] += totals[e];
                }
                current[l] = affinity_placement(profile, num_gpus, cluster.expert_slots_per_gpu);
            }
        }
        out[b] = current;
    }
    return out;
}

namespace detail {

RunPlan prepare_run(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                    const SchedulerConfig& config) {
    model.validate();
    cluster.validate();
    config.validate();
    if (trace.num_gpus != cluster.num_gpus || trace.num_experts != model.num_experts ||
        trace.num_layers != model.num_layers) {
        throw ValidationError(fmt::format(
            "trace dimensions (G={}, E={}, L={}) do not match cluster/model (G={}, E={}, L={})",
            trace.num_gpus, trace.num_experts, trace.num_layers, cluster.num_gpus,
            model.num_experts, model.num_layers));
    }
    trace.validate();
    const int needed = (model.num_experts + cluster.num_gpus - 1) / cluster.num_gpus;
    if (needed > cluster.expert_slots_per_gpu) {
        throw ValidationError(fmt::format(
            "cluster.expert_slots_per_gpu: {} experts per GPU must fit, got {} slots", needed,
            cluster.expert_slots_per_gpu));
    }
    return {CostModel::from(cluster, model), plan_placements(trace, model, cluster, config)};
}

BatchOutcome simulate_batch(const TraceBatch& batch, const std::vector<Placement>& placements,
                            const ModelSpec& model, const ClusterSpec& cluster,
                            const SchedulerConfig& config, const SimFlags& flags,
                            const CostModel& cost) {
    BatchOutcome out;
    out.categories.resize(model.num_layers);
    for (int l = 0; l < model.num_layers; ++l) {
        const auto layer = simulate_layer(batch.layers[l], placements[l], config, flags, cost, cluster);
        out.latency += layer.layer_latency + model.non_moe_layer_time;
        out.swaps += layer.expert_swaps;
        out.layer_latencies.push_back(layer.layer_latency);
        out.gpu_loads.push_back(layer.gpu_loads);
        auto& cats = out.categories[l];
        cats.resize(cluster.num_gpus);
        for (int g = 0; g < cluster.num_gpus; ++g) {
            cats[g].fill(0.0);
            for (const auto& e : layer.gpus[g].events) cats[g][static_cast<std::size_t>(e.kind)] += e.duration;
        }
    }
    return out;
}

RunMetrics merge_outcomes(const Trace& trace, const ModelSpec& model,
                          std::vector<BatchOutcome>&& outcomes) {
    RunMetrics m;
    m.num_gpus = trace.num_gpus;
    m.num_layers = model.num_layers;
    m.per_layer_breakdown = Breakdown(model.num_layers, trace.num_gpus);
    for (std::size_t b = 0; b < outcomes.size(); ++b) {
        auto& o = outcomes[b];
        const auto& batch = trace.batches[b];
        const TokenCount tokens = batch.tokens();
        m.total_tokens += tokens;
        m.duration += o.latency;
        m.per_batch_latency.push_back(o.latency);
        m.per_batch_throughput.push_back(o.latency > 0.0 ? static_cast<double>(tokens) / o.latency : 0.0);
        m.per_batch_alpha.push_back(batch.alpha_used);
        m.per_batch_tokens.push_back(tokens);
        m.expert_swaps_per_batch.push_back(o.swaps);
        for (int l = 0; l < model.num_layers; ++l) {
            m.layer_latencies.push_back(o.layer_latencies[l]);
            m.per_gpu_token_loads.push_back(std::move(o.gpu_loads[l]));
            m.per_expert_token_loads.push_back(batch.layers[l].expert_totals());
            for (int g = 0; g < trace.num_gpus; ++g) {
                for (auto k : kAllEventKinds) {
                    m.per_layer_breakdown.at(l, g, k) += o.categories[l][g][static_cast<std::size_t>(k)];
                }
            }
        }
    }
    return m;
}

}  // namespace detail

RunMetrics simulate_run(const Trace& trace, const ModelSpec& model, const ClusterSpec& cluster,
                        const SchedulerConfig& config, const SimFlags& flags) {
    const auto plan = detail::prepare_run(trace, model, cluster, config);
    std::vector<detail::BatchOutcome> outcomes;
    outcomes.reserve(trace.batches.size());
    for (std::size_t b = 0; b < trace.batches.size(); ++b) {
        outcomes.push_back(detail::simulate_batch(trace.batches[b], plan.placements[b], model,
                                                  cluster, config, flags, plan.cost));
    }
    return detail::merge_outcomes(trace, model, std::move(outcomes));
}

}  // namespace moesim
