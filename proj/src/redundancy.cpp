// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/redundancy.hpp"

#include <algorithm>
#include <cmath>

namespace kvmix {

namespace {

HeadRedundancy clamp_result(double raw, std::size_t t) {
    return {std::clamp(raw, 0.0, 1.0), raw, t};
}

}  // namespace

HeadRedundancy head_redundancy_from_stats(const KeyStatistics& stats) {
    const std::size_t t = stats.count;
    if (t <= 1) {
        return {0.0, 0.0, t};
    }
    double mean_sq = 0.0;
    for (double m : stats.mean_unit_key) {
        mean_sq += m * m;
    }
    const double td = static_cast<double>(t);
    const double raw = (td * td * mean_sq - stats.diagonal_sum) / (td * (td - 1.0));
    return clamp_result(raw, t);
}

HeadRedundancy head_redundancy_fast(KeyView keys, double eps) {
    return head_redundancy_from_stats(key_statistics(keys, eps));
}

HeadRedundancy head_redundancy_fast(const HeadKV& head, double eps) {
    return head_redundancy_fast(head.keys.view(), eps);
}

HeadRedundancy head_redundancy_naive(KeyView keys, double eps, std::size_t ceiling) {
    const std::size_t t = keys.rows;
    if (t > ceiling) {
        throw Error(ErrorCode::oracle_ceiling,
                    "naive redundancy refuses T=" + std::to_string(t) + " above ceiling " + std::to_string(ceiling));
    }
    if (t <= 1) {
        return {0.0, 0.0, t};
    }
    const std::size_t d = keys.cols;
    std::vector<double> unit(t * d);
    for (std::size_t i = 0; i < t; ++i) {
        auto k = keys.row(i);
        double n = 0.0;
        for (float v : k) {
            n += static_cast<double>(v) * static_cast<double>(v);
        }
        const double inv = 1.0 / std::max(std::sqrt(n), eps);
        for (std::size_t c = 0; c < d; ++c) {
            unit[i * d + c] = static_cast<double>(k[c]) * inv;
        }
    }
    double off_diagonal = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        const double* a = unit.data() + i * d;
        for (std::size_t j = 0; j < t; ++j) {
            if (i == j) {
                continue;
            }
            const double* b = unit.data() + j * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += a[c] * b[c];
            }
            off_diagonal += dot;
        }
    }
    const double td = static_cast<double>(t);
    return clamp_result(off_diagonal / (td * (td - 1.0)), t);
}

HeadRedundancy head_redundancy_naive(const HeadKV& head, double eps, std::size_t ceiling) {
    return head_redundancy_naive(head.keys.view(), eps, ceiling);
}

ScoreVector scale_diversity(const ScoreVector& diversity_raw, double importance_mean, double eps) {
    ScoreVector out = match_scale(minmax_normalize(diversity_raw, eps), importance_mean, eps);
    out.kind = ScoreKind::diversity_scaled;
    return out;
}

ScoreVector mix_scores(const ScoreVector& importance, const ScoreVector& diversity_raw, double r_bar, double eps) {
    if (importance.size() != diversity_raw.size()) {
        throw Error(ErrorCode::dimension_mismatch, "importance and diversity score lengths differ");
    }
    if (!(r_bar >= 0.0 && r_bar <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "r_bar must lie in [0, 1]");
    }
    const ScoreVector scaled = scale_diversity(diversity_raw, importance.mean(), eps);
    ScoreVector out{std::vector<double>(importance.size()), ScoreKind::mixed};
    const double keep = 1.0 - r_bar;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.scores[i] = keep * importance.scores[i] + r_bar * scaled.scores[i];
    }
    return out;
}

}  // namespace kvmix
