// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "moesim/config.hpp"
#include "moesim/metrics.hpp"

namespace moesim {

/// A grid over one parameter (alpha, q, policy or tokens_per_gpu) and a set
/// of policies. When the parameter is `policy` the values are the policies.
struct SweepSpec {
    std::string param;
    std::vector<std::string> values;
    std::vector<Policy> policies;
};

struct SweepCell {
    Policy policy = Policy::harmoeny;
    std::string value;
    std::string name;  // output subdirectory
    RunConfig config;
};

struct CellResult {
    Policy policy = Policy::harmoeny;
    std::string value;
    std::string name;
    RunMetrics metrics;
    double throughput = 0.0;
    double mean_ttft = 0.0;
    std::optional<double> variance;
};

/// Expands the grid policy-major in the given orders. Throws ValidationError
/// for an unknown parameter, an empty value list or an invalid cell.
std::vector<SweepCell> expand_sweep(const RunConfig& base, const SweepSpec& spec);

CellResult run_cell(const SweepCell& cell);

/// Reference path: one cell after another.
std::vector<CellResult> run_cells_serial(const std::vector<SweepCell>& cells);
/// Cells distributed over `jobs` OpenMP threads; output order matches input.
std::vector<CellResult> run_cells_omp(const std::vector<SweepCell>& cells, int jobs);

// sweep.csv: policy,value,throughput,mean_ttft,variance
void write_sweep_csv(const std::vector<CellResult>& results, std::ostream& out);

}  // namespace moesim
