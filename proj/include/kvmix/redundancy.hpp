// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "kvmix/scoring.hpp"

namespace kvmix {

/// Off-diagonal average cosine similarity of a head's keys.
struct HeadRedundancy {
    double r_bar = 0.0;  ///< raw clamped to [0, 1]
    double raw = 0.0;
    std::size_t seq_len = 0;
};

inline constexpr std::size_t kDefaultOracleCeiling = 4096;

/// Linear-time path through the mean normalized key:
/// raw = (T^2 ||mean k_hat||^2 - sum ||k_hat_i||^2) / (T (T - 1)). T = 1 gives 0.
HeadRedundancy head_redundancy_fast(KeyView keys, double eps = kDefaultEps);
HeadRedundancy head_redundancy_fast(const HeadKV& head, double eps = kDefaultEps);
HeadRedundancy head_redundancy_from_stats(const KeyStatistics& stats);

/// Quadratic oracle: evaluates every off-diagonal cosine explicitly. Refuses
/// T above `ceiling` with ErrorCode::oracle_ceiling.
HeadRedundancy head_redundancy_naive(KeyView keys,
                                     double eps = kDefaultEps,
                                     std::size_t ceiling = kDefaultOracleCeiling);
HeadRedundancy head_redundancy_naive(const HeadKV& head,
                                     double eps = kDefaultEps,
                                     std::size_t ceiling = kDefaultOracleCeiling);

/// Diversity min-max normalized then rescaled to the importance mean.
ScoreVector scale_diversity(const ScoreVector& diversity_raw, double importance_mean, double eps = kDefaultEps);

/// (1 - r) * s_imp + r * scale_diversity(s_div_raw, mean(s_imp)).
/// r = 0 returns s_imp exactly and r = 1 returns the scaled diversity exactly.
ScoreVector mix_scores(const ScoreVector& importance,
                       const ScoreVector& diversity_raw,
                       double r_bar,
                       double eps = kDefaultEps);
inline ScoreVector mix_scores(const ScoreVector& importance,
                              const ScoreVector& diversity_raw,
                              const HeadRedundancy& r,
                              double eps = kDefaultEps) {
    return mix_scores(importance, diversity_raw, r.r_bar, eps);
}

}  // namespace kvmix
