// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <filesystem>
#include <iosfwd>

#include "json.hpp"
#include "moesim/config.hpp"
#include "moesim/metrics.hpp"

namespace moesim {

// batches.csv: batch_id,alpha,latency_s,throughput_tok_s,expert_swaps
void write_batches_csv(const RunMetrics& m, std::ostream& out);
// breakdown.csv: layer,gpu,category,seconds (seconds summed over batches)
void write_breakdown_csv(const RunMetrics& m, std::ostream& out);
// ecdf.csv: series,value,fraction for series gpu_load and expert_load
void write_ecdf_csv(const RunMetrics& m, std::ostream& out);

/// Summary record. `wall_clock_seconds` is the only field that varies
/// between identical runs.
nlohmann::json summary_json(const RunConfig& c, const RunMetrics& m, double wall_clock_seconds);

/// Writes summary.json, batches.csv, breakdown.csv and ecdf.csv into `dir`,
/// creating it if needed. Throws IoError.
void write_reports(const RunConfig& c, const RunMetrics& m, const std::filesystem::path& dir,
                   double wall_clock_seconds);

}  // namespace moesim
