// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>
#include <vector>

#include "kvmix/cache_model.hpp"

namespace kvmix {

inline constexpr double kDefaultEps = 1e-6;

enum class ScoreKind {
    extrinsic,
    knorm,
    vnorm,
    intrinsic_scaled,
    integrated,
    diversity_raw,
    diversity_scaled,
    mixed,
};

std::string_view to_string(ScoreKind kind);

/// Per-position scores of one head.
struct ScoreVector {
    std::vector<double> scores;
    ScoreKind kind = ScoreKind::extrinsic;

    std::size_t size() const noexcept {
        return scores.size();
    }
    double mean() const noexcept;

    friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

enum class IntrinsicKind { none, knorm, vnorm };

std::string_view to_string(IntrinsicKind kind);

using KeyView = RowsView<float>;

/// Mean attention probability each key receives from the query rows:
/// softmax(q k^T / sqrt(D)) per row, averaged over rows. Sums to one.
ScoreVector extrinsic_importance(KeyView keys, const Matrix& queries);
ScoreVector extrinsic_importance(const HeadKV& head, const ObservationWindow& window);

/// -||k_i||.
ScoreVector knorm_scores(KeyView keys);
ScoreVector knorm_scores(const HeadKV& head);

/// ||v_i||.
ScoreVector vnorm_scores(KeyView values);
ScoreVector vnorm_scores(const HeadKV& head);

/// (s - min) / (max - min + eps); all zeros when max == min.
ScoreVector minmax_normalize(const ScoreVector& s, double eps = kDefaultEps);

/// Rescales so the mean matches `reference_mean`: s * ref / (mean(s) + eps).
ScoreVector match_scale(const ScoreVector& s, double reference_mean, double eps = kDefaultEps);

/// Extrinsic attention plus an intrinsic term min-max normalized and rescaled to
/// the extrinsic mean. IntrinsicKind::none returns the extrinsic scores unchanged.
ScoreVector integrated_importance(KeyView keys,
                                  KeyView values,
                                  const Matrix& queries,
                                  IntrinsicKind intrinsic,
                                  double eps = kDefaultEps);
ScoreVector integrated_importance(const HeadKV& head,
                                  const ObservationWindow& window,
                                  IntrinsicKind intrinsic,
                                  double eps = kDefaultEps);

/// Unit-normalized key statistics shared by the diversity and redundancy
/// computations. Keys are normalized as k / max(||k||, eps).
struct KeyStatistics {
    std::vector<double> mean_unit_key;  ///< (1/T) sum of normalized keys
    double diagonal_sum = 0.0;          ///< sum of ||k_hat_i||^2 (T unless some key is ~0)
    std::size_t count = 0;
};

KeyStatistics key_statistics(KeyView keys, double eps = kDefaultEps);

/// s_div_i = -k_hat_i . mean(k_hat). Values lie in [-1, 1].
ScoreVector diversity_scores(KeyView keys, const KeyStatistics& stats, double eps = kDefaultEps);
ScoreVector diversity_scores(KeyView keys, double eps = kDefaultEps);
ScoreVector diversity_scores(const HeadKV& head, double eps = kDefaultEps);

}  // namespace kvmix
