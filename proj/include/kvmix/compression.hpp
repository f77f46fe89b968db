// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvmix/redundancy.hpp"
#include "kvmix/scoring.hpp"

namespace kvmix {

enum class BasePolicy { snapkv, knorm, vnorm, pyramidkv, adakv };

std::string_view to_string(BasePolicy base);
BasePolicy parse_base_policy(std::string_view name);

struct CompressionPolicy {
    BasePolicy base = BasePolicy::snapkv;
    bool mix = false;
    std::size_t budget = 64;      ///< Per-head budget B, window included.
    std::size_t window_len = 32;
    double eps = kDefaultEps;
    /// Intrinsic term for attention-based bases. Unset means VNorm when mixing
    /// and none otherwise.
    std::optional<IntrinsicKind> intrinsic;
    double pyramid_beta = 0.5;
    /// AdaKV floor = max(window_len + 1, ceil(fraction * B)).
    double adakv_floor_fraction = 0.5;
    /// Use the mixed scores (instead of plain attention) as AdaKV allocation mass.
    bool mixed_allocation_mass = false;
    /// Externally supplied r_bar per head, layer-major (offline head weights).
    std::optional<std::vector<double>> fixed_r_bar;

    /// "snapkv", "snapkv+mix", ...
    std::string name() const;
    IntrinsicKind resolved_intrinsic() const;
    bool needs_windows() const;
};

/// Parses "base" or "base+mix".
CompressionPolicy parse_policy(std::string_view text);
void validate(const CompressionPolicy& policy);

/// Wall time per stage in microseconds.
struct StageTimings {
    double scoring_us = 0.0;     ///< importance (attention and intrinsic terms)
    double diversity_us = 0.0;   ///< key statistics and diversity scores
    double redundancy_us = 0.0;  ///< r_bar from the key statistics
    double selection_us = 0.0;   ///< blending and top-B

    double total_us() const noexcept {
        return scoring_us + diversity_us + redundancy_us + selection_us;
    }
    StageTimings& operator+=(const StageTimings& o) noexcept;
};

/// Scores of the non-window prefix of a head.
struct HeadScores {
    ScoreVector importance;  ///< before any blend
    ScoreVector final;       ///< what selection ranks
    double r_bar = 0.0;      ///< 0 when the policy does not mix
    StageTimings timings;
};

/// Scores positions [0, T - window_len) of the head under the policy. The
/// window is required for attention-based bases and ignored otherwise.
HeadScores score_head_detailed(const HeadKV& head,
                               const ObservationWindow* window,
                               const CompressionPolicy& policy,
                               std::optional<double> r_bar_override = std::nullopt);

ScoreVector score_head(const HeadKV& head, const ObservationWindow* window, const CompressionPolicy& policy);

/// Retained positions, ascending. `scores` covers the non-window prefix only
/// (length seq_len - window_len). Budgets at or below window_len keep the last
/// `budget` positions; otherwise the window plus the best budget - window_len
/// prefix positions, ties going to the earlier index.
std::vector<std::size_t> top_b_select(const ScoreVector& scores,
                                      std::size_t seq_len,
                                      std::size_t budget,
                                      std::size_t window_len);

/// PyramidKV-style per-layer budgets: an arithmetic schedule around B with
/// slope beta, floored at window_len + 1 and summing to L * B exactly.
std::vector<std::size_t> allocate_budgets_pyramid(std::size_t layers,
                                                  std::size_t budget,
                                                  double beta,
                                                  std::size_t window_len);

/// AdaKV-style per-head budgets: floor plus a largest-remainder share of the
/// residual proportional to mass. Sums to H * B exactly.
std::vector<std::size_t> allocate_budgets_adaptive(std::span<const double> masses,
                                                   std::size_t budget,
                                                   std::size_t floor);

std::size_t adakv_floor(const CompressionPolicy& policy);

struct CompressedHead {
    std::vector<std::size_t> retained;
    Matrix keys;
    Matrix values;
    double r_bar = 0.0;
    ScoreVector scores_used;
    std::size_t budget_effective = 0;
    StageTimings timings;
};

CompressedHead compress_head(const HeadKV& head,
                             const ObservationWindow* window,
                             const CompressionPolicy& policy,
                             std::optional<std::size_t> budget_override = std::nullopt,
                             std::optional<double> r_bar_override = std::nullopt);

struct CompressedCache {
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t seq_len = 0;
    std::size_t head_dim = 0;
    std::size_t window_len = 0;
    CompressionPolicy policy;
    std::vector<CompressedHead> entries;  ///< layer-major

    const CompressedHead& at(std::size_t layer, std::size_t head) const {
        return entries.at(layer * heads + head);
    }
    std::size_t total_retained() const noexcept;
    /// retained / (L * H * T)
    double compression_ratio() const noexcept;
};

/// Allocates budgets (uniform, pyramid or adaptive by base) and compresses
/// every head. `workers` > 1 fans heads out over threads; the result does not
/// depend on it.
CompressedCache compress_cache(const KVCache& cache,
                               const WindowSet* windows,
                               const CompressionPolicy& policy,
                               std::size_t workers = 1);

}  // namespace kvmix
