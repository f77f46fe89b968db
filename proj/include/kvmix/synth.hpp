// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "kvmix/cache_model.hpp"

namespace kvmix::synth {

/// Parameters of one synthetic head. Keys are drawn around `n_clusters`
/// unit-sphere centers; lower `spread` and fewer clusters mean a more
/// redundant head.
struct SynthHeadParams {
    std::size_t seq_len = 1024;
    std::size_t head_dim = 64;
    std::size_t n_clusters = 4;
    double spread = 0.1;
    double value_scale = 1.0;
    std::size_t hot_clusters = 1;    ///< Clusters the window queries aim at (0 = random directions).
    double query_sharpness = 32.0;   ///< Query norm; larger means peakier attention.
    /// Noise scale of query directions around their hot center; unset means `spread`.
    std::optional<double> query_spread;
    bool orthogonal_centers = false; ///< Gram-Schmidt the centers (needs n_clusters <= head_dim).
    std::size_t window_len = 32;
    std::size_t group_size = 1;      ///< Query heads per KV head.
    std::uint64_t seed = 0;

    friend bool operator==(const SynthHeadParams&, const SynthHeadParams&) = default;
};

/// Throws invalid_argument when the parameter invariants do not hold.
void validate(const SynthHeadParams& params);

/// Deterministic: the same params always give bit-identical output.
std::pair<HeadKV, ObservationWindow> gen_head(const SynthHeadParams& params);

/// Held-out queries built like window queries (same centers) but drawn from an
/// independent random stream selected by `eval_seed`.
Matrix gen_eval_queries(const SynthHeadParams& params, std::size_t n_queries, std::uint64_t eval_seed = 0);

using ParamGrid = std::vector<std::vector<SynthHeadParams>>;  ///< [layer][head]

struct GeneratedCache {
    KVCache cache;
    WindowSet windows;
};

/// Seed actually used for head (layer, head) of a grid generation.
std::uint64_t derive_head_seed(std::uint64_t base_seed, std::size_t layer, std::size_t head);

/// Params with the per-head derived seed substituted; what gen_cache feeds gen_head.
SynthHeadParams head_params(const ParamGrid& grid, std::size_t layer, std::size_t head);

GeneratedCache gen_cache(const ParamGrid& grid);

/// Grid where every head shares `params` (per-head seeds still differ).
ParamGrid uniform_grid(const SynthHeadParams& params, std::size_t layers, std::size_t heads);

}  // namespace kvmix::synth
