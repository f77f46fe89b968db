// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kvmix/compression.hpp"

namespace kvmix {

/// softmax(q K^T / sqrt(D)) V for every query row. Throws on an empty key set.
MatrixD attention_output(const Matrix& queries, KeyView keys, KeyView values);

struct Fidelity {
    double l2 = 0.0;   ///< mean ||o_full - o_comp||
    double cos = 0.0;  ///< mean (1 - cos(o_full, o_comp))
};

Fidelity fidelity(const HeadKV& head, const Matrix& kept_keys, const Matrix& kept_values, const Matrix& queries);
Fidelity fidelity(const HeadKV& head, const CompressedHead& compressed, const Matrix& queries);

/// Mean over all keys of 1 - max cosine similarity to any retained key.
double coverage_gap(KeyView keys, std::span<const std::size_t> retained, double eps = kDefaultEps);
double coverage_gap(const HeadKV& head, std::span<const std::size_t> retained, double eps = kDefaultEps);

struct HeadMetrics {
    std::size_t layer = 0;
    std::size_t head = 0;
    double r_bar = 0.0;
    double fidelity_l2 = 0.0;
    double fidelity_cos = 0.0;
    double coverage_gap = 0.0;
    double memory_ratio = 0.0;
    StageTimings timings;
};

struct EvalReport {
    double fidelity_l2 = 0.0;
    double fidelity_cos = 0.0;
    double coverage_gap = 0.0;
    double memory_ratio = 0.0;
    StageTimings timings;  ///< summed over heads
    std::vector<HeadMetrics> heads;
};

/// `eval_queries` holds one query matrix per head, layer-major.
EvalReport evaluate(const KVCache& cache,
                    const CompressedCache& compressed,
                    std::span<const Matrix> eval_queries,
                    double eps = kDefaultEps,
                    std::size_t workers = 1);

struct StageSamples {
    std::vector<double> scoring_us;
    std::vector<double> diversity_us;
    std::vector<double> redundancy_us;
    std::vector<double> selection_us;
    std::vector<double> total_us;

    StageTimings median() const;
    double median_total() const;
};

struct BenchReport {
    std::size_t repetitions = 0;
    StageSamples without_mix;
    StageSamples with_mix;
    /// (median total with mix - median total without) / median total without.
    double mixing_overhead = 0.0;
};

/// Times the policy's scoring and selection over every head, once with mixing
/// off and once on, `repetitions` times each (>= 3), single-threaded.
BenchReport bench_stage_timings(const KVCache& cache,
                                const WindowSet* windows,
                                const CompressionPolicy& policy,
                                std::size_t repetitions);

double median(std::vector<double> values);

}  // namespace kvmix
