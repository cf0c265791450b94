// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "moesim/engine.hpp"
#include "support/oracles.hpp"

using namespace moesim;
namespace mt = moesim::oracle;

namespace {

// compute(n) = 56 n FLOP at 1 FLOP/s; one expert is 32 bytes.
CostModel unit_cost(double pcie) {
    CostModel c;
    c.d_model = 4;
    c.d_ff = 4;
    c.dtype_bytes = 1;
    c.gpu_flops = 1.0;
    c.pcie_bandwidth = pcie;
    c.metadata_time = 0.0;
    return c;
}

ClusterSpec free_links(int gpus, int slots) {
    ClusterSpec c;
    c.num_gpus = gpus;
    c.expert_slots_per_gpu = slots;
    c.link_latency = 0.0;
    c.link_bandwidth = 1e300;
    return c;
}

RoutingMatrix worked_routing() {
    RoutingMatrix m(3, 3);
    const TokenCount rows[3][3] = {{1, 1, 3}, {1, 1, 3}, {0, 2, 3}};
    for (int g = 0; g < 3; ++g)
        for (int e = 0; e < 3; ++e) m.at(g, e) = rows[g][e];
    return m;
}

double total_of(const GpuTimeline& t, EventKind k) {
    double s = 0.0;
    for (const auto& e : t.events)
        if (e.kind == k) s += e.duration;
    return s;
}

ModelSpec small_model(int layers, int experts) {
    ModelSpec m;
    m.num_layers = layers;
    m.num_experts = experts;
    m.d_model = 64;
    m.d_ff = 128;
    m.dtype_bytes = 2;
    return m;
}

Trace skewed_trace(const ModelSpec& model, int gpus, int batches, TokenCount tokens, double alpha,
                   std::uint64_t seed, SkewMode mode = SkewMode::fixed) {
    WorkloadSpec w;
    w.num_batches = batches;
    w.tokens_per_gpu_per_batch = tokens;
    w.skew.alpha = alpha;
    w.skew.mode = mode;
    w.skew.hi = 0.95;
    w.seed = seed;
    return generate_trace(w, model, gpus);
}

}  // namespace

TEST(AllToAll, Examples) {
    ClusterSpec c;
    c.num_gpus = 2;
    c.link_latency = 2e-5;
    std::vector<double> zero{0.0, 0.0};
    EXPECT_DOUBLE_EQ(all_to_all_time(zero, zero, c), 2e-5);

    c.link_bandwidth = 1e9;
    c.link_latency = 0.0;
    std::vector<double> out{1e6, 0.0};
    std::vector<double> in{0.0, 1e6};
    EXPECT_DOUBLE_EQ(all_to_all_time(out, in, c), 1e-3);

    c.num_gpus = 4;
    c.link_latency = 1e-5;
    std::vector<double> sym(4, 2e6);
    EXPECT_NEAR(all_to_all_time(sym, sym, c), 1e-5 + 2e-3, 1e-15);
}

TEST(Plan, SingleResidentExpert) {
    const auto cost = unit_cost(1.0);
    const std::vector<ExpertWork> work{{0, 100}};
    const std::vector<int> resident{0};
    const auto p = plan_gpu_execution(work, resident, 2, SimFlags{}, cost);
    ASSERT_EQ(p.events.size(), 1u);
    EXPECT_EQ(p.events[0].kind, EventKind::compute);
    EXPECT_EQ(p.fetches, 0);
    EXPECT_DOUBLE_EQ(p.end, cost.expert_compute_time(100));
}

TEST(Plan, FetchHiddenBehindResidentCompute) {
    const auto cost = unit_cost(1.0);  // load 32 s, compute(1) 56 s
    const TokenCount n = 1;
    ASSERT_GE(cost.expert_compute_time(n), cost.expert_load_time());
    const std::vector<ExpertWork> work{{0, n}, {2, n}};
    const std::vector<int> resident{0, 1};
    const auto p = plan_gpu_execution(work, resident, 2, SimFlags{}, cost);
    EXPECT_EQ(p.order, (std::vector<int>{0, 2}));
    EXPECT_EQ(p.fetches, 1);
    for (const auto& e : p.events) EXPECT_NE(e.kind, EventKind::wait);
    const auto fetch = std::find_if(p.events.begin(), p.events.end(),
                                    [](const TimelineEvent& e) { return e.kind == EventKind::expert_load_async; });
    ASSERT_NE(fetch, p.events.end());
    EXPECT_DOUBLE_EQ(fetch->start, 0.0);
    EXPECT_LE(fetch->end(), cost.expert_compute_time(n));
    EXPECT_DOUBLE_EQ(p.end, 2 * cost.expert_compute_time(n));
}

TEST(Plan, SyncLoadSerialises) {
    const auto cost = unit_cost(1.0);
    const TokenCount n = 1;
    const std::vector<ExpertWork> work{{0, n}, {2, n}};
    const std::vector<int> resident{0, 1};
    SimFlags flags;
    flags.async_loading_enabled = false;
    const auto p = plan_gpu_execution(work, resident, 2, flags, cost);
    EXPECT_DOUBLE_EQ(p.end, 2 * cost.expert_compute_time(n) + cost.expert_load_time());
    EXPECT_EQ(p.fetches, 1);
}

TEST(Plan, OrderIsResidentsThenRemoteByTokens) {
    const auto cost = unit_cost(1e9);
    const std::vector<ExpertWork> work{{5, 3}, {1, 7}, {4, 9}, {0, 7}, {2, 1}};
    const std::vector<int> resident{0, 1, 2};
    const auto p = plan_gpu_execution(work, resident, 4, SimFlags{}, cost);
    EXPECT_EQ(p.order, (std::vector<int>{0, 1, 2, 4, 5}));
}

// A fetch needs a slot whose expert has finished; with slots >= 2 and the
// immediately preceding compute at least one load long, the fetch always
// completes before the compute track needs it.
TEST(Plan, MaskingWhenPredecessorCoversLoad) {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const int slots = 2 + static_cast<int>(rng() % 4);
        const int experts = 2 + static_cast<int>(rng() % 12);
        const auto cost = unit_cost(std::uniform_real_distribution<double>(0.05, 5.0)(rng));
        std::vector<int> all(experts);
        std::iota(all.begin(), all.end(), 0);
        std::shuffle(all.begin(), all.end(), rng);
        const int n_res = static_cast<int>(rng() % (std::min(slots, experts) + 1));
        std::vector<int> resident(all.begin(), all.begin() + n_res);
        std::vector<ExpertWork> work;
        for (int e = 0; e < experts; ++e)
            if (rng() % 3 != 0) work.push_back({e, static_cast<TokenCount>(1 + rng() % 20)});

        const auto p = plan_gpu_execution(work, resident, slots, SimFlags{}, cost);
        double prev = 0.0;
        bool covered = true;
        std::size_t idx = 0;
        for (const auto& ev : p.events) {
            if (ev.kind != EventKind::compute) continue;
            const bool fetched =
                std::find(resident.begin(), resident.end(), p.order[idx]) == resident.end();
            if (fetched && prev < cost.expert_load_time()) covered = false;
            prev = ev.duration;
            ++idx;
        }
        if (!covered) continue;
        ++checked;
        for (const auto& ev : p.events) ASSERT_NE(ev.kind, EventKind::wait) << "trial " << trial;
    }
    EXPECT_GT(checked, 200);
}

// Counterexample to the cumulative-compute form of masking: both resident
// slots are busy until their own computes end, so the second fetch stalls.
TEST(Plan, CumulativeComputeDoesNotGuaranteeMasking) {
    const auto cost = unit_cost(32.0 / 280.0);  // load 280 s = compute(5)
    const std::vector<ExpertWork> work{{0, 10}, {1, 10}, {2, 1}, {3, 1}};
    const std::vector<int> resident{0, 1};
    const auto p = plan_gpu_execution(work, resident, 2, SimFlags{}, cost);
    double wait = 0.0;
    for (const auto& e : p.events)
        if (e.kind == EventKind::wait) wait += e.duration;
    EXPECT_NEAR(wait, cost.expert_compute_time(4), 1e-6);
}

TEST(Plan, RejectsTooFewSlots) {
    const auto cost = unit_cost(1.0);
    const std::vector<ExpertWork> work{{0, 1}, {1, 1}, {2, 1}};
    const std::vector<int> resident{0, 1};
    EXPECT_NO_THROW(plan_gpu_execution(work, resident, 2, SimFlags{}, cost));
    EXPECT_THROW(plan_gpu_execution(work, resident, 1, SimFlags{}, cost), ValidationError);
    const std::vector<int> crowded{0, 1, 2};
    EXPECT_THROW(plan_gpu_execution(work, crowded, 2, SimFlags{}, cost), ValidationError);
}

TEST(Layer, SingleGpuHasNoCommunication) {
    auto cluster = free_links(1, 4);
    cluster.link_latency = 1e-3;
    auto cost = unit_cost(1e12);
    cost.metadata_time = 0.25;
    RoutingMatrix m(1, 3);
    m.at(0, 0) = 4;
    m.at(0, 2) = 6;
    SchedulerConfig cfg;
    const auto r = simulate_layer(m, round_robin_placement(3, 1), cfg, SimFlags{}, cost, cluster);
    EXPECT_DOUBLE_EQ(r.layer_latency, 0.25 + cost.expert_compute_time(4) + cost.expert_compute_time(6));
    EXPECT_EQ(total_of(r.gpus[0], EventKind::scatter), 0.0);
    EXPECT_EQ(total_of(r.gpus[0], EventKind::wait), 0.0);
}

TEST(Layer, ZeroTokens) {
    ClusterSpec cluster;
    cluster.num_gpus = 4;
    const auto cost = CostModel::from(cluster, small_model(1, 8));
    SchedulerConfig cfg;
    const auto r = simulate_layer(RoutingMatrix(4, 8), round_robin_placement(8, 4), cfg, SimFlags{},
                                  cost, cluster);
    EXPECT_NEAR(r.layer_latency, cost.metadata_time + 2 * cluster.link_latency, 1e-15);
    EXPECT_EQ(r.expert_swaps, 0);
}

TEST(Layer, WorkedExampleWithAndWithoutRebalancing) {
    const auto cluster = free_links(3, 2);
    const auto cost = unit_cost(32.0 / 28.0);  // load = compute(1) / 2
    SchedulerConfig cfg;
    cfg.token_threshold_q = 1;
    const auto placement = round_robin_placement(3, 3);
    const double c1 = cost.expert_compute_time(1);

    const auto on = simulate_layer(worked_routing(), placement, cfg, SimFlags{}, cost, cluster);
    EXPECT_EQ(on.gpu_loads, (std::vector<TokenCount>{5, 5, 5}));
    for (int g = 0; g < 3; ++g) {
        EXPECT_NEAR(total_of(on.gpus[g], EventKind::compute), 5 * c1, 1e-9);
        EXPECT_NEAR(total_of(on.gpus[g], EventKind::wait), 0.0, 1e-9);
    }
    EXPECT_EQ(on.expert_swaps, 2);

    SimFlags off;
    off.rebalancing_enabled = false;
    const auto base = simulate_layer(worked_routing(), placement, cfg, off, cost, cluster);
    EXPECT_EQ(base.gpu_loads, (std::vector<TokenCount>{2, 4, 9}));
    EXPECT_NEAR(total_of(base.gpus[0], EventKind::wait), 7 * c1, 1e-9);
    EXPECT_NEAR(total_of(base.gpus[1], EventKind::wait), 5 * c1, 1e-9);
    EXPECT_NEAR(total_of(base.gpus[2], EventKind::wait), 0.0, 1e-9);
}

// Per-layer invariants over random routings and cost settings, all policies.
TEST(Layer, RandomisedInvariants) {
    std::mt19937_64 rng(2718);
    const Policy policies[] = {Policy::harmoeny, Policy::round_robin, Policy::even_split,
                               Policy::affinity};
    for (int trial = 0; trial < 600; ++trial) {
        const int g = 1 + static_cast<int>(rng() % 6);
        const int slots = 2 + static_cast<int>(rng() % 3);
        const int e = 1 + static_cast<int>(rng() % (g * slots));
        ClusterSpec cluster;
        cluster.num_gpus = g;
        cluster.expert_slots_per_gpu = slots;
        cluster.pcie_bandwidth = std::uniform_real_distribution<double>(1e8, 1e11)(rng);
        cluster.link_bandwidth = std::uniform_real_distribution<double>(1e8, 1e11)(rng);
        auto model = small_model(1, e);
        const auto cost = CostModel::from(cluster, model);
        SchedulerConfig cfg;
        cfg.policy = policies[rng() % 4];
        cfg.token_threshold_q = 1 + static_cast<TokenCount>(rng() % 50);
        SimFlags flags;
        flags.async_loading_enabled = rng() % 2;
        flags.rebalancing_enabled = rng() % 4 != 0;
        const auto m = mt::random_routing(rng, g, e, 4000);
        const auto placement =
            cfg.policy == Policy::affinity
                ? affinity_placement({m.expert_totals(), 1}, g, slots)
                : mt::random_placement(rng, e, g);
        if ([&] {
                try {
                    placement.validate(g, slots);
                    return false;
                } catch (const ValidationError&) {
                    return true;
                }
            }())
            continue;

        const auto r = simulate_layer(m, placement, cfg, flags, cost, cluster);
        ASSERT_TRUE(validate_against(r.schedule, m));

        TokenCount computed = 0;
        double max_span = 0.0;
        for (int gpu = 0; gpu < g; ++gpu) {
            const auto& t = r.gpus[gpu];
            double partition = 0.0;
            double last_end = 0.0;
            double scatter_end = 0.0;
            double arrive = r.scatter_barrier;
            for (const auto& ev : t.events) {
                ASSERT_GE(ev.duration, 0.0);
                if (ev.kind == EventKind::expert_load_async) continue;
                partition += ev.duration;
                ASSERT_GE(ev.start, last_end - 1e-12) << "overlap on GPU " << gpu;
                last_end = ev.end();
                if (ev.kind == EventKind::compute) computed += *ev.tokens;
                if (ev.kind == EventKind::scatter) scatter_end = ev.end();
                if (ev.kind != EventKind::gather) arrive = std::max(arrive, ev.end());
            }
            ASSERT_NEAR(partition, t.span, 1e-9);
            ASSERT_DOUBLE_EQ(t.span, r.layer_latency);
            if (g > 1) ASSERT_NEAR(scatter_end, r.scatter_barrier, 1e-12);
            ASSERT_NEAR(arrive, r.gather_barrier, 1e-12);
            max_span = std::max(max_span, t.span);
        }
        ASSERT_EQ(computed, total_tokens(r.schedule));
        ASSERT_DOUBLE_EQ(r.layer_latency, max_span);
    }
}

TEST(Run, SingleBatchSingleLayer) {
    ClusterSpec cluster;
    cluster.num_gpus = 2;
    auto model = small_model(1, 4);
    model.non_moe_layer_time = 0.5;
    const auto trace = skewed_trace(model, 2, 1, 100, 0.3, 1);
    SchedulerConfig cfg;
    cfg.token_threshold_q = 4;
    const auto m = simulate_run(trace, model, cluster, cfg, SimFlags{});
    const auto layer = simulate_layer(trace.batches[0].layers[0], round_robin_placement(4, 2), cfg,
                                      SimFlags{}, CostModel::from(cluster, model), cluster);
    ASSERT_EQ(m.per_batch_latency.size(), 1u);
    EXPECT_DOUBLE_EQ(m.per_batch_latency[0], layer.layer_latency + 0.5);
    EXPECT_DOUBLE_EQ(m.duration, m.per_batch_latency[0]);
    EXPECT_EQ(m.total_tokens, 200);
}

TEST(Run, DimensionMismatchRejected) {
    ClusterSpec cluster;
    cluster.num_gpus = 2;
    const auto model = small_model(1, 4);
    const auto trace = skewed_trace(model, 3, 1, 10, 0.0, 1);
    EXPECT_THROW(simulate_run(trace, model, cluster, SchedulerConfig{}, SimFlags{}), ValidationError);
}

TEST(Run, RebalancingReducesTimeAndMaxWaitUnderSkew) {
    ModelSpec model;
    model.num_layers = 1;
    model.num_experts = 128;
    model.d_model = 768;
    model.d_ff = 3072;
    model.dtype_bytes = 4;
    ClusterSpec cluster;
    cluster.num_gpus = 8;
    cluster.expert_slots_per_gpu = 18;
    WorkloadSpec w;
    w.num_batches = 1;
    // Hot buckets of about 2900 tokens per source, above q = 1751.
    w.tokens_per_gpu_per_batch = 32768;
    w.skew.alpha = 0.9;
    w.skew.skewed_experts = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    w.seed = 11;
    const auto trace = generate_trace(w, model, 8);
    SchedulerConfig cfg;
    cfg.placement = PlacementKind::blocked;
    cfg.token_threshold_q =
        estimate_token_threshold(cluster.gpu_flops, model.dtype_bytes, cluster.pcie_bandwidth);
    SimFlags off;
    off.rebalancing_enabled = false;
    const auto with = simulate_run(trace, model, cluster, cfg, SimFlags{});
    const auto without = simulate_run(trace, model, cluster, cfg, off);
    EXPECT_LT(with.duration, without.duration);
    double max_with = 0.0;
    double max_without = 0.0;
    for (int g = 0; g < 8; ++g) {
        max_with = std::max(max_with, with.per_layer_breakdown.gpu_total(g, EventKind::wait));
        max_without = std::max(max_without, without.per_layer_breakdown.gpu_total(g, EventKind::wait));
    }
    EXPECT_LT(max_with, max_without);
}

TEST(Run, AsyncNeverSlowerThanSync) {
    std::mt19937_64 rng(161);
    for (int trial = 0; trial < 60; ++trial) {
        const int g = 2 + static_cast<int>(rng() % 5);
        const int slots = 2 + static_cast<int>(rng() % 3);
        const int e = 1 + static_cast<int>(rng() % (g * slots));
        ClusterSpec cluster;
        cluster.num_gpus = g;
        cluster.expert_slots_per_gpu = slots;
        cluster.pcie_bandwidth = std::uniform_real_distribution<double>(1e8, 1e11)(rng);
        const auto model = small_model(2, e);
        const auto trace = skewed_trace(model, g, 3, 1 + rng() % 2000, 0.0, rng(),
                                        SkewMode::resample_uniform);
        SchedulerConfig cfg;
        cfg.policy = rng() % 2 ? Policy::harmoeny : Policy::even_split;
        cfg.token_threshold_q = 1 + static_cast<TokenCount>(rng() % 100);
        SimFlags sync;
        sync.async_loading_enabled = false;
        const auto a = simulate_run(trace, model, cluster, cfg, SimFlags{});
        const auto s = simulate_run(trace, model, cluster, cfg, sync);
        ASSERT_LE(a.duration, s.duration + 1e-12) << "trial " << trial;
        const int swaps = std::accumulate(a.expert_swaps_per_batch.begin(), a.expert_swaps_per_batch.end(), 0);
        if (swaps == 0) ASSERT_DOUBLE_EQ(a.duration, s.duration);
    }
}

TEST(Run, DeterministicAndParallelPathIdentical) {
    ClusterSpec cluster;
    cluster.num_gpus = 4;
    cluster.expert_slots_per_gpu = 4;
    const auto model = small_model(3, 16);
    const auto trace = skewed_trace(model, 4, 9, 700, 0.0, 5, SkewMode::resample_uniform);
    for (auto policy : {Policy::harmoeny, Policy::affinity, Policy::even_split}) {
        SchedulerConfig cfg;
        cfg.policy = policy;
        cfg.token_threshold_q = 8;
        cfg.affinity_refresh_batches = 2;
        const auto a = simulate_run(trace, model, cluster, cfg, SimFlags{});
        const auto b = simulate_run(trace, model, cluster, cfg, SimFlags{});
        for (int threads : {1, 2, 4}) {
            const auto c = simulate_run_omp(trace, model, cluster, cfg, SimFlags{}, threads);
            for (const auto* other : {&b, &c}) {
                EXPECT_EQ(a.duration, other->duration);
                EXPECT_EQ(a.per_batch_latency, other->per_batch_latency);
                EXPECT_EQ(a.layer_latencies, other->layer_latencies);
                EXPECT_EQ(a.per_gpu_token_loads, other->per_gpu_token_loads);
                EXPECT_EQ(a.expert_swaps_per_batch, other->expert_swaps_per_batch);
                for (int l = 0; l < model.num_layers; ++l)
                    for (int g = 0; g < 4; ++g)
                        for (auto k : kAllEventKinds)
                            EXPECT_EQ(a.per_layer_breakdown.at(l, g, k), other->per_layer_breakdown.at(l, g, k));
            }
        }
    }
}

TEST(Run, AffinityRefreshesFromPreviousWindow) {
    ClusterSpec cluster;
    cluster.num_gpus = 2;
    const auto model = small_model(1, 4);
    Trace t;
    t.num_gpus = 2;
    t.num_experts = 4;
    t.num_layers = 1;
    for (int b = 0; b < 3; ++b) {
        TraceBatch batch;
        batch.batch_id = b;
        RoutingMatrix m(2, 4);
        m.at(0, 3) = 9 - b;
        m.at(1, 2) = 4;
        m.at(0, 1) = 2;
        m.at(1, 0) = 1;
        batch.layers.push_back(m);
        t.batches.push_back(batch);
    }
    SchedulerConfig cfg;
    cfg.policy = Policy::affinity;
    cfg.affinity_refresh_batches = 1;
    const auto plans = plan_placements(t, model, cluster, cfg);
    EXPECT_EQ(plans[0][0].home, affinity_placement({{0, 0, 0, 0}, 0}, 2, 2).home);
    EXPECT_EQ(plans[1][0].home, affinity_placement({t.batches[0].layers[0].expert_totals(), 1}, 2, 2).home);
    EXPECT_EQ(plans[1][0].home, (std::vector<int>{0, 1, 1, 0}));
}
