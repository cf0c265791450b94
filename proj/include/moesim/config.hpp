// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"
#include "moesim/core.hpp"
#include "moesim/engine.hpp"
#include "moesim/policies.hpp"
#include "moesim/workload.hpp"

namespace moesim {

/// Built-in model shapes. Expert inner dims are chosen so that
/// 2 * d_model * d_ff * dtype_bytes reproduces the published expert size:
/// switch128 768 x 3072 fp32 = 18 MiB, qwen 2048 x 2112 fp32 = 33 MiB.
std::optional<ModelSpec> model_preset(std::string_view name);

inline constexpr const char* kOutputDirEnv = "MOESIM_OUTPUT_DIR";
inline constexpr const char* kDefaultOutputDir = "moesim_out";

struct RunConfig {
    ClusterSpec cluster;
    ModelSpec model;
    std::string model_preset;  // empty for a fully custom model
    SchedulerConfig scheduler;
    SimFlags flags;
    std::optional<WorkloadSpec> workload;
    std::optional<std::string> trace_path;
    std::string output_dir = kDefaultOutputDir;

    /// Cross-field checks; throws ValidationError naming the field.
    void validate() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Strict parse: unknown keys and wrong types are ValidationErrors carrying
/// the dotted field path. A missing scheduler.token_threshold_q is filled
/// from the threshold estimator.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fully resolved config; parse_run_config(to_json(c)) reproduces c.
nlohmann::json to_json(const RunConfig& c);

/// The trace a config describes: generated from its workload or read from disk.
Trace materialize_trace(const RunConfig& c);

}  // namespace moesim
