// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The moesim Authors. All Rights Reserved.

#include "moesim/workload.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "json.hpp"

namespace moesim {

using nlohmann::json;

namespace {

constexpr int kTraceVersion = 1;
constexpr const char* kTraceFormat = "moesim-trace";

void check_unit_interval(double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError(fmt::format("{}: must be in [0, 1], got {}", field, v));
    }
}

}  // namespace

void SkewSpec::validate(int num_experts) const {
    check_unit_interval(alpha, "workload.skew.alpha");
    if (mode == SkewMode::resample_uniform) {
        check_unit_interval(lo, "workload.skew.lo");
        check_unit_interval(hi, "workload.skew.hi");
        if (lo > hi) {
            throw ValidationError(fmt::format("workload.skew.lo: {} exceeds hi {}", lo, hi));
        }
    }
    const bool any_skew = alpha > 0.0 || (mode == SkewMode::resample_uniform && hi > 0.0);
    if (any_skew && skewed_experts.empty()) {
        throw ValidationError("workload.skew.skewed_experts: must be non-empty when alpha > 0");
    }
    std::set<int> seen;
    for (int e : skewed_experts) {
        if (e < 0 || e >= num_experts) {
            throw ValidationError(fmt::format(
                "workload.skew.skewed_experts: index {} out of range [0, {})", e, num_experts));
        }
        if (!seen.insert(e).second) {
            throw ValidationError(
                fmt::format("workload.skew.skewed_experts: duplicate index {}", e));
        }
    }
}

void WorkloadSpec::validate(int num_experts) const {
    if (num_batches < 1) {
        throw ValidationError(
            fmt::format("workload.num_batches: must be >= 1, got {}", num_batches));
    }
    if (tokens_per_gpu_per_batch < 1) {
        throw ValidationError(fmt::format("workload.tokens_per_gpu_per_batch: must be >= 1, got {}",
                                          tokens_per_gpu_per_batch));
    }
    skew.validate(num_experts);
}

void Trace::validate() const {
    if (num_gpus < 1 || num_experts < 1 || num_layers < 1) {
        throw ValidationError(fmt::format("trace: invalid dimensions G={} E={} L={}", num_gpus,
                                          num_experts, num_layers));
    }
    for (const auto& b : batches) {
        if (static_cast<int>(b.layers.size()) != num_layers) {
            throw ValidationError(fmt::format("trace: batch {} has {} layers, expected {}",
                                              b.batch_id, b.layers.size(), num_layers));
        }
        for (const auto& m : b.layers) {
            if (m.num_gpus() != num_gpus || m.num_experts() != num_experts) {
                throw ValidationError(
                    fmt::format("trace: batch {} has a {}x{} routing matrix, expected {}x{}",
                                b.batch_id, m.num_gpus(), m.num_experts(), num_gpus, num_experts));
            }
            for (int g = 0; g < num_gpus; ++g) {
                for (int e = 0; e < num_experts; ++e) {
                    if (m.at(g, e) < 0) {
                        throw ValidationError(
                            fmt::format("trace: batch {} has a negative count", b.batch_id));
                    }
                }
                if (m.row_sum(g) != b.layers.front().row_sum(g)) {
                    throw ValidationError(fmt::format(
                        "trace: batch {} row sums differ between layers on GPU {}", b.batch_id, g));
                }
            }
        }
    }
}

std::vector<double> skew_probabilities(double alpha, std::span<const int> skewed, int num_experts) {
    if (num_experts < 1) {
        throw ValidationError(fmt::format("num_experts: must be >= 1, got {}", num_experts));
    }
    check_unit_interval(alpha, "alpha");
    if (alpha > 0.0 && skewed.empty()) {
        throw ValidationError("skewed_experts: must be non-empty when alpha > 0");
    }
    std::set<int> seen;
    for (int e : skewed) {
        if (e < 0 || e >= num_experts) {
            throw ValidationError(fmt::format("skewed_experts: index {} out of range", e));
        }
        if (!seen.insert(e).second) {
            throw ValidationError(fmt::format("skewed_experts: duplicate index {}", e));
        }
    }

    const auto n_skewed = static_cast<int>(skewed.size());
    const auto n = static_cast<double>(num_experts);
    if (n_skewed == 0 || n_skewed == num_experts) return std::vector<double>(num_experts, 1.0 / n);

    // Skew only ever concentrates mass: below the skewed set's uniform share
    // the distribution stays uniform rather than starving the skewed experts.
    const double mass = std::max(alpha, static_cast<double>(n_skewed) / n);
    std::vector<double> probs(num_experts, (1.0 - mass) / static_cast<double>(num_experts - n_skewed));
    for (int e : skewed) probs[e] = mass / static_cast<double>(n_skewed);
    return probs;
}

RoutingMatrix sample_routing(std::span<const double> probs, TokenCount tokens_per_gpu,
                             int num_gpus, Rng& rng) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    if (probs.empty() || std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError(fmt::format("sample_routing: probabilities sum to {}, expected 1", sum));
    }
    if (tokens_per_gpu < 0 || num_gpus < 1) {
        throw ValidationError("sample_routing: invalid token or GPU count");
    }
    const AliasTable table(probs);
    RoutingMatrix m(num_gpus, static_cast<int>(probs.size()));
    for (int g = 0; g < num_gpus; ++g) {
        for (TokenCount t = 0; t < tokens_per_gpu; ++t) {
            ++m.at(g, static_cast<int>(table.sample(rng)));
        }
    }
    return m;
}

Trace generate_trace(const WorkloadSpec& spec, const ModelSpec& model, int num_gpus) {
    model.validate();
    spec.validate(model.num_experts);
    if (num_gpus < 1) throw ValidationError("cluster.num_gpus: must be >= 1");

    Trace t;
    t.num_gpus = num_gpus;
    t.num_experts = model.num_experts;
    t.num_layers = model.num_layers;
    t.seed = spec.seed;
    t.batches.reserve(spec.num_batches);

    Rng rng(spec.seed);
    for (int b = 0; b < spec.num_batches; ++b) {
        TraceBatch batch;
        batch.batch_id = b;
        batch.alpha_used = spec.skew.mode == SkewMode::fixed
                               ? spec.skew.alpha
                               : rng.uniform(spec.skew.lo, spec.skew.hi);
        const auto probs =
            skew_probabilities(batch.alpha_used, spec.skew.skewed_experts, model.num_experts);
        batch.layers.reserve(model.num_layers);
        for (int l = 0; l < model.num_layers; ++l) {
            batch.layers.push_back(
                sample_routing(probs, spec.tokens_per_gpu_per_batch, num_gpus, rng));
        }
        t.batches.push_back(std::move(batch));
    }
    return t;
}

void write_trace(const Trace& t, std::ostream& out) {
    json header = {{"format", kTraceFormat}, {"version", kTraceVersion},
                   {"num_gpus", t.num_gpus},  {"num_experts", t.num_experts},
                   {"num_layers", t.num_layers}, {"rng", t.rng},
                   {"seed", t.seed}};
    out << header.dump() << '\n';
    for (const auto& b : t.batches) {
        json layers = json::array();
        for (const auto& m : b.layers) {
            json rows = json::array();
            for (int g = 0; g < m.num_gpus(); ++g) {
                auto r = m.row(g);
                rows.push_back(std::vector<TokenCount>(r.begin(), r.end()));
            }
            layers.push_back(std::move(rows));
        }
        json rec = {{"batch_id", b.batch_id}, {"alpha_used", b.alpha_used}, {"layers", layers}};
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("write_trace: stream write failed");
}

void write_trace(const Trace& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    write_trace(t, out);
}

namespace {

template <typename T>
T get_field(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(line, fmt::format("missing field '{}'", key));
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ParseError(line, fmt::format("field '{}' has the wrong type", key));
    }
}

RoutingMatrix parse_matrix(const json& rows, int num_gpus, int num_experts, std::size_t line) {
    if (!rows.is_array() || static_cast<int>(rows.size()) != num_gpus) {
        throw ParseError(line, fmt::format("routing matrix must have {} rows", num_gpus));
    }
    RoutingMatrix m(num_gpus, num_experts);
    for (int g = 0; g < num_gpus; ++g) {
        const auto& row = rows[g];
        if (!row.is_array() || static_cast<int>(row.size()) != num_experts) {
            throw ParseError(line, fmt::format("routing matrix row {} must have {} entries", g,
                                               num_experts));
        }
        for (int e = 0; e < num_experts; ++e) {
            const auto& v = row[e];
            if (!v.is_number_integer()) {
                throw ParseError(line, fmt::format("count at row {} column {} is not an integer", g, e));
            }
            const auto c = v.get<TokenCount>();
            if (c < 0 || (v.is_number_unsigned() && v.get<std::uint64_t>() > INT64_MAX)) {
                throw ParseError(line, fmt::format("negative count {} at row {} column {}", c, g, e));
            }
            m.at(g, e) = c;
        }
    }
    return m;
}

}  // namespace

Trace read_trace(std::istream& in) {
    std::string text;
    std::size_t line_no = 0;
    Trace t;
    bool have_header = false;

    while (std::getline(in, text)) {
        ++line_no;
        if (text.empty()) continue;
        json rec;
        try {
            rec = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, fmt::format("malformed record: {}", e.what()));
        }
        if (!rec.is_object()) throw ParseError(line_no, "record is not an object");

        if (!have_header) {
            if (get_field<std::string>(rec, "format", line_no) != kTraceFormat) {
                throw ParseError(line_no, "not a moesim trace header");
            }
            if (get_field<int>(rec, "version", line_no) != kTraceVersion) {
                throw ParseError(line_no, "unsupported trace version");
            }
            t.num_gpus = get_field<int>(rec, "num_gpus", line_no);
            t.num_experts = get_field<int>(rec, "num_experts", line_no);
            t.num_layers = get_field<int>(rec, "num_layers", line_no);
            t.rng = get_field<std::string>(rec, "rng", line_no);
            t.seed = get_field<std::uint64_t>(rec, "seed", line_no);
            if (t.num_gpus < 1 || t.num_experts < 1 || t.num_layers < 1) {
                throw ParseError(line_no, "header dimensions must be positive");
            }
            have_header = true;
            continue;
        }

        TraceBatch b;
        b.batch_id = get_field<std::int64_t>(rec, "batch_id", line_no);
        b.alpha_used = get_field<double>(rec, "alpha_used", line_no);
        auto it = rec.find("layers");
        if (it == rec.end() || !it->is_array()) throw ParseError(line_no, "missing 'layers' array");
        if (static_cast<int>(it->size()) != t.num_layers) {
            throw ParseError(line_no, fmt::format("batch has {} layers, header says {}",
                                                  it->size(), t.num_layers));
        }
        for (const auto& rows : *it) {
            b.layers.push_back(parse_matrix(rows, t.num_gpus, t.num_experts, line_no));
        }
        for (int g = 0; g < t.num_gpus; ++g) {
            for (const auto& m : b.layers) {
                if (m.row_sum(g) != b.layers.front().row_sum(g)) {
                    throw ParseError(line_no,
                                     fmt::format("row sums differ between layers on GPU {}", g));
                }
            }
        }
        t.batches.push_back(std::move(b));
    }
    if (in.bad()) throw IoError("read_trace: stream read failed");
    if (!have_header) throw ParseError(line_no + 1, "missing trace header");
    return t;
}

Trace read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
    return read_trace(in);
}

}  // namespace moesim
