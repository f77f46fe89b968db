// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kvmix {

namespace {

double row_norm(std::span<const float> row) {
    double s = 0.0;
    for (float v : row) {
        s += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(s);
}

}  // namespace

std::string_view to_string(ScoreKind kind) {
    switch (kind) {
    case ScoreKind::extrinsic:
        return "extrinsic";
    case ScoreKind::knorm:
        return "knorm";
    case ScoreKind::vnorm:
        return "vnorm";
    case ScoreKind::intrinsic_scaled:
        return "intrinsic_scaled";
    case ScoreKind::integrated:
        return "integrated";
    case ScoreKind::diversity_raw:
        return "diversity_raw";
    case ScoreKind::diversity_scaled:
        return "diversity_scaled";
    case ScoreKind::mixed:
        return "mixed";
    }
    return "unknown";
}

std::string_view to_string(IntrinsicKind kind) {
    switch (kind) {
    case IntrinsicKind::none:
        return "none";
    case IntrinsicKind::knorm:
        return "knorm";
    case IntrinsicKind::vnorm:
        return "vnorm";
    }
    return "none";
}

double ScoreVector::mean() const noexcept {
    if (scores.empty()) {
        return 0.0;
    }
    return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

ScoreVector extrinsic_importance(KeyView keys, const Matrix& queries) {
    if (queries.cols() != keys.cols) {
        throw Error(ErrorCode::dimension_mismatch, "window queries and keys disagree on D");
    }
    if (queries.rows() == 0 || keys.rows == 0) {
        throw Error(ErrorCode::invalid_argument, "extrinsic importance needs at least one query and one key");
    }
    const std::size_t t = keys.rows;
    const std::size_t d = keys.cols;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    ScoreVector out{std::vector<double>(t, 0.0), ScoreKind::extrinsic};
    std::vector<double> logits(t);
    std::vector<double> q(d);
    for (std::size_t j = 0; j < queries.rows(); ++j) {
        auto qrow = queries.row(j);
        for (std::size_t c = 0; c < d; ++c) {
            q[c] = static_cast<double>(qrow[c]) * scale;
        }
        double max_logit = -HUGE_VAL;
        for (std::size_t i = 0; i < t; ++i) {
            const float* k = keys.data.data() + i * d;
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += q[c] * static_cast<double>(k[c]);
            }
            logits[i] = dot;
            max_logit = std::max(max_logit, dot);
        }
        double z = 0.0;
        for (double& l : logits) {
            l = std::exp(l - max_logit);
            z += l;
        }
        const double inv = 1.0 / z;
        for (std::size_t i = 0; i < t; ++i) {
            out.scores[i] += logits[i] * inv;
        }
    }
    const double inv_rows = 1.0 / static_cast<double>(queries.rows());
    for (double& s : out.scores) {
        s *= inv_rows;
    }
    return out;
}

ScoreVector extrinsic_importance(const HeadKV& head, const ObservationWindow& window) {
    return extrinsic_importance(head.keys.view(), window.queries);
}

ScoreVector knorm_scores(KeyView keys) {
    ScoreVector out{std::vector<double>(keys.rows), ScoreKind::knorm};
    for (std::size_t i = 0; i < keys.rows; ++i) {
        out.scores[i] = -row_norm(keys.row(i));
    }
    return out;
}

ScoreVector knorm_scores(const HeadKV& head) {
    return knorm_scores(head.keys.view());
}

ScoreVector vnorm_scores(KeyView values) {
    ScoreVector out{std::vector<double>(values.rows), ScoreKind::vnorm};
    for (std::size_t i = 0; i < values.rows; ++i) {
        out.scores[i] = row_norm(values.row(i));
    }
    return out;
}

ScoreVector vnorm_scores(const HeadKV& head) {
    return vnorm_scores(head.values.view());
}

ScoreVector minmax_normalize(const ScoreVector& s, double eps) {
    ScoreVector out{std::vector<double>(s.size(), 0.0), s.kind};
    if (s.scores.empty()) {
        return out;
    }
    const auto [lo_it, hi_it] = std::minmax_element(s.scores.begin(), s.scores.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (hi == lo) {
        return out;
    }
    const double denom = hi - lo + eps;
    for (std::size_t i = 0; i < s.size(); ++i) {
        out.scores[i] = (s.scores[i] - lo) / denom;
    }
    return out;
}

ScoreVector match_scale(const ScoreVector& s, double reference_mean, double eps) {
    const double factor = reference_mean / (s.mean() + eps);
    ScoreVector out{s.scores, s.kind};
    for (double& v : out.scores) {
        v *= factor;
    }
    return out;
}

ScoreVector integrated_importance(KeyView keys,
                                  KeyView values,
                                  const Matrix& queries,
                                  IntrinsicKind intrinsic,
                                  double eps) {
    ScoreVector out = extrinsic_importance(keys, queries);
    out.kind = ScoreKind::integrated;
    if (intrinsic == IntrinsicKind::none) {
        return out;
    }
    if (values.rows != keys.rows || values.cols != keys.cols) {
        throw Error(ErrorCode::dimension_mismatch, "keys and values disagree in shape");
    }
    const ScoreVector raw = intrinsic == IntrinsicKind::vnorm ? vnorm_scores(values) : knorm_scores(keys);
    ScoreVector scaled = match_scale(minmax_normalize(raw, eps), out.mean(), eps);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.scores[i] += scaled.scores[i];
    }
    return out;
}

ScoreVector integrated_importance(const HeadKV& head,
                                  const ObservationWindow& window,
                                  IntrinsicKind intrinsic,
                                  double eps) {
    return integrated_importance(head.keys.view(), head.values.view(), window.queries, intrinsic, eps);
}

KeyStatistics key_statistics(KeyView keys, double eps) {
    KeyStatistics stats;
    stats.count = keys.rows;
    stats.mean_unit_key.assign(keys.cols, 0.0);
    for (std::size_t i = 0; i < keys.rows; ++i) {
        auto k = keys.row(i);
        const double n = row_norm(k);
        const double inv = 1.0 / std::max(n, eps);
        for (std::size_t c = 0; c < keys.cols; ++c) {
            stats.mean_unit_key[c] += static_cast<double>(k[c]) * inv;
        }
        stats.diagonal_sum += (n * inv) * (n * inv);
    }
    if (keys.rows > 0) {
        const double inv_t = 1.0 / static_cast<double>(keys.rows);
        for (double& m : stats.mean_unit_key) {
            m *= inv_t;
        }
    }
    return stats;
}

ScoreVector diversity_scores(KeyView keys, const KeyStatistics& stats, double eps) {
    if (stats.mean_unit_key.size() != keys.cols) {
        throw Error(ErrorCode::dimension_mismatch, "key statistics do not match key dimension");
    }
    ScoreVector out{std::vector<double>(keys.rows), ScoreKind::diversity_raw};
    for (std::size_t i = 0; i < keys.rows; ++i) {
        auto k = keys.row(i);
        const double inv = 1.0 / std::max(row_norm(k), eps);
        double dot = 0.0;
        for (std::size_t c = 0; c < keys.cols; ++c) {
            dot += static_cast<double>(k[c]) * stats.mean_unit_key[c];
        }
        out.scores[i] = -dot * inv;
    }
    return out;
}

ScoreVector diversity_scores(KeyView keys, double eps) {
    return diversity_scores(keys, key_statistics(keys, eps), eps);
}

ScoreVector diversity_scores(const HeadKV& head, double eps) {
    return diversity_scores(head.keys.view(), eps);
}

}  // namespace kvmix
