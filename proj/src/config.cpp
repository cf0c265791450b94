// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/config.hpp"

#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <set>

namespace moesim {

using nlohmann::json;

std::optional<ModelSpec> model_preset(std::string_view name) {
    if (name == "switch128") {
        return ModelSpec{.num_layers = 12, .num_experts = 128, .d_model = 768, .d_ff = 3072,
                         .dtype_bytes = 4, .non_moe_layer_time = 0.0};
    }
    if (name == "qwen") {
        return ModelSpec{.num_layers = 24, .num_experts = 60, .d_model = 2048, .d_ff = 2112,
                         .dtype_bytes = 4, .non_moe_layer_time = 0.0};
    }
    return std::nullopt;
}

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be rejected as typos.
class ObjectReader {
public:
    ObjectReader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ValidationError(fmt::format("{}: expected an object", where()));
    }

    bool has(const char* key) const { return obj_.contains(key); }

    template <typename T>
    std::optional<T> optional(const char* key) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return std::nullopt;
        used_.insert(key);
        return convert<T>(*it, field(key));
    }

    template <typename T>
    T get_or(const char* key, T fallback) {
        return optional<T>(key).value_or(fallback);
    }

    template <typename T>
    T required(const char* key) {
        auto v = optional<T>(key);
        if (!v) throw ValidationError(fmt::format("{}: required field is missing", field(key)));
        return *v;
    }

    const json* child(const char* key) {
        auto it = obj_.find(key);
        if (it == obj_.end()) return nullptr;
        used_.insert(key);
        return &*it;
    }

    std::string field(const char* key) const {
        return path_.empty() ? std::string(key) : path_ + "." + key;
    }

    void finish() const {
        for (const auto& [k, v] : obj_.items()) {
            if (!used_.contains(k)) throw ValidationError(fmt::format("{}: unknown key", field(k.c_str())));
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    template <typename T>
    static T convert(const json& v, const std::string& name) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(fmt::format("{}: expected a boolean", name));
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ValidationError(fmt::format("{}: expected an integer", name));
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_unsigned()) return v.get<T>();
                if (v.get<long long>() < 0) throw ValidationError(fmt::format("{}: must be non-negative", name));
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ValidationError(fmt::format("{}: expected a number", name));
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError(fmt::format("{}: expected a string", name));
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            if (!v.is_array()) throw ValidationError(fmt::format("{}: expected an array", name));
            for (const auto& x : v) {
                if (!x.is_number_integer()) {
                    throw ValidationError(fmt::format("{}: expected an array of integers", name));
                }
            }
        }
        return v.get<T>();
    }

    const json& obj_;
    std::string path_;
    std::set<std::string> used_;
};

ClusterSpec parse_cluster(const json& j) {
    ObjectReader r(j, "cluster");
    ClusterSpec c;
    c.num_gpus = r.get_or("num_gpus", c.num_gpus);
    c.expert_slots_per_gpu = r.get_or("expert_slots_per_gpu", c.expert_slots_per_gpu);
    c.link_bandwidth = r.get_or("link_bandwidth", c.link_bandwidth);
    c.link_latency = r.get_or("link_latency", c.link_latency);
    c.pcie_bandwidth = r.get_or("pcie_bandwidth", c.pcie_bandwidth);
    c.gpu_flops = r.get_or("gpu_flops", c.gpu_flops);
    r.finish();
    return c;
}

void parse_model(const json& j, RunConfig& cfg) {
    if (j.is_string()) {
        cfg.model_preset = j.get<std::string>();
        auto preset = model_preset(cfg.model_preset);
        if (!preset) throw ValidationError(fmt::format("model: unknown preset '{}'", cfg.model_preset));
        cfg.model = *preset;
        return;
    }
    ObjectReader r(j, "model");
    ModelSpec m;
    if (auto name = r.optional<std::string>("preset")) {
        auto preset = model_preset(*name);
        if (!preset) throw ValidationError(fmt::format("model.preset: unknown preset '{}'", *name));
        m = *preset;
        cfg.model_preset = *name;
    } else {
        for (const char* key : {"num_layers", "num_experts", "d_model", "d_ff"}) {
            if (!r.has(key)) {
                throw ValidationError(fmt::format("{}: required without a preset", r.field(key)));
            }
        }
    }
    m.num_layers = r.get_or("num_layers", m.num_layers);
    m.num_experts = r.get_or("num_experts", m.num_experts);
    m.d_model = r.get_or("d_model", m.d_model);
    m.d_ff = r.get_or("d_ff", m.d_ff);
    m.dtype_bytes = r.get_or("dtype_bytes", m.dtype_bytes);
    m.non_moe_layer_time = r.get_or("non_moe_layer_time", m.non_moe_layer_time);
    // Derived value, accepted so an echoed config re-parses; must agree.
    if (auto bytes = r.optional<double>("expert_bytes")) {
        if (*bytes != m.expert_bytes()) {
            throw ValidationError(fmt::format("model.expert_bytes: {} disagrees with 2*d_model*d_ff*dtype_bytes = {}",
                                              *bytes, m.expert_bytes()));
        }
    }
    r.finish();
    cfg.model = m;
}

SkewSpec parse_skew(const json& j) {
    ObjectReader r(j, "workload.skew");
    SkewSpec s;
    s.alpha = r.get_or("alpha", s.alpha);
    s.skewed_experts = r.get_or("skewed_experts", s.skewed_experts);
    const auto mode = r.get_or<std::string>("mode", "fixed");
    if (mode == "fixed") {
        s.mode = SkewMode::fixed;
    } else if (mode == "resample_uniform") {
        s.mode = SkewMode::resample_uniform;
    } else {
        throw ValidationError(fmt::format(
            "workload.skew.mode: unknown mode '{}' (expected fixed or resample_uniform)", mode));
    }
    s.lo = r.get_or("lo", s.lo);
    s.hi = r.get_or("hi", s.hi);
    r.finish();
    return s;
}

WorkloadSpec parse_workload(const json& j) {
    ObjectReader r(j, "workload");
    WorkloadSpec w;
    w.num_batches = r.get_or("num_batches", w.num_batches);
    w.tokens_per_gpu_per_batch = r.get_or("tokens_per_gpu_per_batch", w.tokens_per_gpu_per_batch);
    w.seed = r.get_or("seed", w.seed);
    if (const json* skew = r.child("skew")) w.skew = parse_skew(*skew);
    r.finish();
    return w;
}

void parse_scheduler(const json& j, RunConfig& cfg) {
    ObjectReader r(j, "scheduler");
    auto& s = cfg.scheduler;
    s.policy = parse_policy(r.get_or<std::string>("policy", "harmoeny"));
    s.placement = parse_placement_kind(r.get_or<std::string>("placement", "round_robin"));
    s.affinity_refresh_batches = r.get_or("affinity_refresh_batches", s.affinity_refresh_batches);
    auto q = r.optional<TokenCount>("token_threshold_q");
    // Integration configs call the threshold eq_tokens.
    auto eq = r.optional<TokenCount>("eq_tokens");
    if (q && eq && *q != *eq) {
        throw ValidationError("scheduler.eq_tokens: conflicts with scheduler.token_threshold_q");
    }
    if (!q) q = eq;
    s.token_threshold_q = q ? *q
                            : estimate_token_threshold(cfg.cluster.gpu_flops, cfg.model.dtype_bytes,
                                                       cfg.cluster.pcie_bandwidth);
    r.finish();
}

void parse_flags(const json& j, SimFlags& f) {
    ObjectReader r(j, "flags");
    f.rebalancing_enabled = r.get_or("rebalancing_enabled", f.rebalancing_enabled);
    f.async_loading_enabled = r.get_or("async_loading_enabled", f.async_loading_enabled);
    f.include_scheduler_walltime = r.get_or("include_scheduler_walltime", f.include_scheduler_walltime);
    r.finish();
}

}  // namespace

void RunConfig::validate() const {
    cluster.validate();
    model.validate();
    scheduler.validate();
    if (workload.has_value() == trace_path.has_value()) {
        throw ValidationError("workload: exactly one of 'workload' and 'trace' must be given");
    }
    if (workload) workload->validate(model.num_experts);
    const int needed = (model.num_experts + cluster.num_gpus - 1) / cluster.num_gpus;
    if (scheduler.policy != Policy::affinity && needed > cluster.expert_slots_per_gpu) {
        throw ValidationError(fmt::format(
            "cluster.expert_slots_per_gpu: static placement puts {} experts on a GPU, got {} slots",
            needed, cluster.expert_slots_per_gpu));
    }
    if (static_cast<long long>(model.num_experts) >
        static_cast<long long>(cluster.num_gpus) * cluster.expert_slots_per_gpu) {
        throw ValidationError("cluster.expert_slots_per_gpu: experts do not fit in the cluster");
    }
    if (output_dir.empty()) throw ValidationError("output_dir: must not be empty");
}

RunConfig parse_run_config(const json& doc) {
    ObjectReader r(doc, "");
    RunConfig cfg;
    if (const json* c = r.child("cluster")) cfg.cluster = parse_cluster(*c);
    const json* model = r.child("model");
    if (!model) throw ValidationError("model: required field is missing");
    parse_model(*model, cfg);
    if (const json* f = r.child("flags")) parse_flags(*f, cfg.flags);
    if (const json* s = r.child("scheduler")) {
        parse_scheduler(*s, cfg);
    } else {
        parse_scheduler(json::object(), cfg);
    }
    if (const json* w = r.child("workload")) cfg.workload = parse_workload(*w);
    cfg.trace_path = r.optional<std::string>("trace");
    if (auto out = r.optional<std::string>("output_dir")) {
        cfg.output_dir = *out;
    } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
        cfg.output_dir = env;
    }
    r.finish();
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(fmt::format("config '{}': {}", path.string(), e.what()));
    }
    return parse_run_config(doc);
}

json to_json(const RunConfig& c) {
    json model = {{"num_layers", c.model.num_layers},
                  {"num_experts", c.model.num_experts},
                  {"d_model", c.model.d_model},
                  {"d_ff", c.model.d_ff},
                  {"dtype_bytes", c.model.dtype_bytes},
                  {"non_moe_layer_time", c.model.non_moe_layer_time},
                  {"expert_bytes", c.model.expert_bytes()}};
    if (!c.model_preset.empty()) model["preset"] = c.model_preset;

    json doc = {
        {"cluster",
         {{"num_gpus", c.cluster.num_gpus},
          {"expert_slots_per_gpu", c.cluster.expert_slots_per_gpu},
          {"link_bandwidth", c.cluster.link_bandwidth},
          {"link_latency", c.cluster.link_latency},
          {"pcie_bandwidth", c.cluster.pcie_bandwidth},
          {"gpu_flops", c.cluster.gpu_flops}}},
        {"model", model},
        {"scheduler",
         {{"policy", std::string(to_string(c.scheduler.policy))},
          {"placement", std::string(to_string(c.scheduler.placement))},
          {"token_threshold_q", c.scheduler.token_threshold_q},
          {"affinity_refresh_batches", c.scheduler.affinity_refresh_batches}}},
        {"flags",
         {{"rebalancing_enabled", c.flags.rebalancing_enabled},
          {"async_loading_enabled", c.flags.async_loading_enabled},
          {"include_scheduler_walltime", c.flags.include_scheduler_walltime}}},
        {"output_dir", c.output_dir}};
    if (c.workload) {
        const auto& w = *c.workload;
        json skew = {{"alpha", w.skew.alpha},
                     {"skewed_experts", w.skew.skewed_experts},
                     {"mode", w.skew.mode == SkewMode::fixed ? "fixed" : "resample_uniform"},
                     {"lo", w.skew.lo},
                     {"hi", w.skew.hi}};
        doc["workload"] = {{"num_batches", w.num_batches},
                           {"tokens_per_gpu_per_batch", w.tokens_per_gpu_per_batch},
                           {"seed", w.seed},
                           {"skew", skew}};
    }
    if (c.trace_path) doc["trace"] = *c.trace_path;
    return doc;
}

Trace materialize_trace(const RunConfig& c) {
    if (c.workload) return generate_trace(*c.workload, c.model, c.cluster.num_gpus);
    return read_trace(std::filesystem::path(*c.trace_path));
}

}  // namespace moesim
