// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kvmix/parallel.hpp"

namespace kvmix {

namespace {

std::vector<double> unit_rows(KeyView keys, double eps) {
    std::vector<double> out(keys.rows * keys.cols);
    for (std::size_t i = 0; i < keys.rows; ++i) {
        auto k = keys.row(i);
        double n = 0.0;
        for (float v : k) {
            n += static_cast<double>(v) * static_cast<double>(v);
        }
        const double inv = 1.0 / std::max(std::sqrt(n), eps);
        for (std::size_t c = 0; c < keys.cols; ++c) {
            out[i * keys.cols + c] = static_cast<double>(k[c]) * inv;
        }
    }
    return out;
}

}  // namespace

MatrixD attention_output(const Matrix& queries, KeyView keys, KeyView values) {
    if (keys.rows == 0) {
        throw Error(ErrorCode::invalid_argument, "attention over an empty key set");
    }
    if (values.rows != keys.rows || queries.cols() != keys.cols) {
        throw Error(ErrorCode::dimension_mismatch, "attention inputs disagree in shape");
    }
    const std::size_t m = keys.rows;
    const std::size_t d = keys.cols;
    const std::size_t dv = values.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    MatrixD out(queries.rows(), dv);
    std::vector<double> w(m);
    for (std::size_t r = 0; r < queries.rows(); ++r) {
        auto q = queries.row(r);
        double max_logit = -HUGE_VAL;
        for (std::size_t i = 0; i < m; ++i) {
            auto k = keys.row(i);
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += static_cast<double>(q[c]) * static_cast<double>(k[c]);
            }
            w[i] = dot * scale;
            max_logit = std::max(max_logit, w[i]);
        }
        double z = 0.0;
        for (double& x : w) {
            x = std::exp(x - max_logit);
            z += x;
        }
        auto o = out.row(r);
        for (std::size_t i = 0; i < m; ++i) {
            const double p = w[i] / z;
            auto v = values.row(i);
            for (std::size_t c = 0; c < dv; ++c) {
                o[c] += p * static_cast<double>(v[c]);
            }
        }
    }
    return out;
}

Fidelity fidelity(const HeadKV& head, const Matrix& kept_keys, const Matrix& kept_values, const Matrix& queries) {
    if (queries.rows() == 0) {
        throw Error(ErrorCode::invalid_argument, "fidelity needs at least one query");
    }
    const MatrixD full = attention_output(queries, head.keys.view(), head.values.view());
    const MatrixD comp = attention_output(queries, kept_keys.view(), kept_values.view());
    Fidelity f;
    for (std::size_t r = 0; r < queries.rows(); ++r) {
        auto a = full.row(r);
        auto b = comp.row(r);
        double diff = 0.0;
        double dot = 0.0;
        double na = 0.0;
        double nb = 0.0;
        for (std::size_t c = 0; c < a.size(); ++c) {
            diff += (a[c] - b[c]) * (a[c] - b[c]);
            dot += a[c] * b[c];
            na += a[c] * a[c];
            nb += b[c] * b[c];
        }
        f.l2 += std::sqrt(diff);
        if (diff == 0.0) {
            continue;  // identical outputs: cosine distance is exactly zero
        }
        const double denom = std::sqrt(na) * std::sqrt(nb);
        const double cos = denom > 0.0 ? std::clamp(dot / denom, -1.0, 1.0) : 0.0;
        f.cos += 1.0 - cos;
    }
    const double n = static_cast<double>(queries.rows());
    f.l2 /= n;
    f.cos /= n;
    return f;
}

Fidelity fidelity(const HeadKV& head, const CompressedHead& compressed, const Matrix& queries) {
    return fidelity(head, compressed.keys, compressed.values, queries);
}

double coverage_gap(KeyView keys, std::span<const std::size_t> retained, double eps) {
    if (retained.empty()) {
        throw Error(ErrorCode::invalid_argument, "coverage gap of an empty retained set");
    }
    const std::size_t d = keys.cols;
    const auto unit = unit_rows(keys, eps);
    std::vector<char> is_retained(keys.rows, 0);
    for (std::size_t r : retained) {
        if (r >= keys.rows) {
            throw Error(ErrorCode::invalid_argument, "retained index out of range");
        }
        is_retained[r] = 1;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < keys.rows; ++i) {
        if (is_retained[i]) {
            continue;  // self-similarity is 1
        }
        const double* a = unit.data() + i * d;
        double best = -1.0;
        for (std::size_t r : retained) {
            const double* b = unit.data() + r * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += a[c] * b[c];
            }
            best = std::max(best, dot);
        }
        total += std::clamp(1.0 - best, 0.0, 2.0);
    }
    return total / static_cast<double>(keys.rows);
}

double coverage_gap(const HeadKV& head, std::span<const std::size_t> retained, double eps) {
    return coverage_gap(head.keys.view(), retained, eps);
}

EvalReport evaluate(const KVCache& cache,
                    const CompressedCache& compressed,
                    std::span<const Matrix> eval_queries,
                    double eps,
                    std::size_t workers) {
    const std::size_t layers = cache.num_layers();
    const std::size_t heads = cache.num_heads();
    if (compressed.layers != layers || compressed.heads != heads || compressed.seq_len != cache.seq_len()) {
        throw Error(ErrorCode::dimension_mismatch, "compressed cache does not match the original grid");
    }
    if (eval_queries.size() != layers * heads) {
        throw Error(ErrorCode::dimension_mismatch, "need one eval query matrix per head");
    }
    EvalReport report;
    report.heads.resize(layers * heads);
    parallel_for(layers * heads, workers, [&](std::size_t idx) {
        const std::size_t l = idx / heads;
        const std::size_t h = idx % heads;
        const auto& head = cache.head(l, h);
        const auto& comp = compressed.at(l, h);
        const Fidelity f = fidelity(head, comp, eval_queries[idx]);
        HeadMetrics m;
        m.layer = l;
        m.head = h;
        m.r_bar = comp.r_bar;
        m.fidelity_l2 = f.l2;
        m.fidelity_cos = f.cos;
        m.coverage_gap = coverage_gap(head, comp.retained, eps);
        m.memory_ratio = static_cast<double>(comp.retained.size()) / static_cast<double>(head.seq_len());
        m.timings = comp.timings;
        report.heads[idx] = m;
    });
    for (const auto& m : report.heads) {
        report.fidelity_l2 += m.fidelity_l2;
        report.fidelity_cos += m.fidelity_cos;
        report.coverage_gap += m.coverage_gap;
        report.timings += m.timings;
    }
    const double n = static_cast<double>(report.heads.size());
    report.fidelity_l2 /= n;
    report.fidelity_cos /= n;
    report.coverage_gap /= n;
    report.memory_ratio = compressed.compression_ratio();
    return report;
}

double median(std::vector<double> values) {
    if (values.empty()) {
        return 0.0;
    }
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

StageTimings StageSamples::median() const {
    return {kvmix::median(scoring_us), kvmix::median(diversity_us), kvmix::median(redundancy_us),
            kvmix::median(selection_us)};
}

double StageSamples::median_total() const {
    return kvmix::median(total_us);
}

BenchReport bench_stage_timings(const KVCache& cache,
                                const WindowSet* windows,
                                const CompressionPolicy& policy,
                                std::size_t repetitions) {
    if (repetitions < 3) {
        throw Error(ErrorCode::invalid_argument, "bench needs at least 3 repetitions");
    }
    CompressionPolicy plain = policy;
    plain.mix = false;
    CompressionPolicy mixed = policy;
    mixed.mix = true;
    if (policy.needs_windows() && windows == nullptr) {
        throw Error(ErrorCode::missing_windows, "policy " + policy.name() + " needs observation windows");
    }

    auto run = [&](const CompressionPolicy& p, StageSamples& samples) {
        StageTimings total;
        for (std::size_t l = 0; l < cache.num_layers(); ++l) {
            for (std::size_t h = 0; h < cache.num_heads(); ++h) {
                const ObservationWindow* w = p.needs_windows() ? &windows->at(l, h) : nullptr;
                total += compress_head(cache.head(l, h), w, p).timings;
            }
        }
        samples.scoring_us.push_back(total.scoring_us);
        samples.diversity_us.push_back(total.diversity_us);
        samples.redundancy_us.push_back(total.redundancy_us);
        samples.selection_us.push_back(total.selection_us);
        samples.total_us.push_back(total.total_us());
    };

    BenchReport report;
    report.repetitions = repetitions;
    for (std::size_t r = 0; r < repetitions; ++r) {
        run(plain, report.without_mix);
        run(mixed, report.with_mix);
    }
    const double base = report.without_mix.median_total();
    report.mixing_overhead = base > 0.0 ? (report.with_mix.median_total() - base) / base : 0.0;
    return report;
}

}  // namespace kvmix
