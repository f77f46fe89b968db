// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "kvmix/matrix.hpp"

namespace kvmix {

/// Key and value rows of one attention head, both T x D.
struct HeadKV {
    Matrix keys;
    Matrix values;

    std::size_t seq_len() const noexcept {
        return keys.rows();
    }
    std::size_t head_dim() const noexcept {
        return keys.cols();
    }

    friend bool operator==(const HeadKV&, const HeadKV&) = default;
};

struct LayerCache {
    std::size_t layer_index = 0;
    std::vector<HeadKV> heads;

    friend bool operator==(const LayerCache&, const LayerCache&) = default;
};

/// A full multi-layer cache. The last `window_len` positions of every head
/// form the observation window.
struct KVCache {
    std::vector<LayerCache> layers;
    std::size_t window_len = 1;

    std::size_t num_layers() const noexcept {
        return layers.size();
    }
    std::size_t num_heads() const noexcept {
        return layers.empty() ? 0 : layers.front().heads.size();
    }
    std::size_t seq_len() const noexcept {
        return num_heads() == 0 ? 0 : layers.front().heads.front().seq_len();
    }
    std::size_t head_dim() const noexcept {
        return num_heads() == 0 ? 0 : layers.front().heads.front().head_dim();
    }

    const HeadKV& head(std::size_t layer, std::size_t h) const {
        return layers.at(layer).heads.at(h);
    }

    friend bool operator==(const KVCache&, const KVCache&) = default;
};

/// Query rows that score one KV head. With grouped-query attention the rows of
/// every query head in the group are stacked, so rows() == window_len * group_size.
struct ObservationWindow {
    Matrix queries;
    std::size_t layer_index = 0;
    std::size_t head_index = 0;

    std::size_t effective_rows() const noexcept {
        return queries.rows();
    }

    friend bool operator==(const ObservationWindow&, const ObservationWindow&) = default;
};

/// Per-head observation windows in layer-major, head-major order.
class WindowSet {
public:
    WindowSet() = default;
    WindowSet(std::size_t layers, std::size_t heads, std::vector<ObservationWindow> windows);

    std::size_t num_layers() const noexcept {
        return m_layers;
    }
    std::size_t num_heads() const noexcept {
        return m_heads;
    }
    /// Rows per window (W_eff); zero for an empty set.
    std::size_t effective_rows() const noexcept {
        return m_windows.empty() ? 0 : m_windows.front().effective_rows();
    }

    const ObservationWindow& at(std::size_t layer, std::size_t head) const;
    const std::vector<ObservationWindow>& all() const noexcept {
        return m_windows;
    }

    friend bool operator==(const WindowSet&, const WindowSet&) = default;

private:
    std::size_t m_layers = 0;
    std::size_t m_heads = 0;
    std::vector<ObservationWindow> m_windows;
};

enum class ViolationKind {
    empty_cache,
    shape_mismatch,
    non_finite,
    window_length,
    window_shape,
};

std::string to_string(ViolationKind kind);

struct Violation {
    ViolationKind kind;
    std::optional<std::size_t> layer;
    std::optional<std::size_t> head;
    std::optional<std::size_t> position;
    std::string detail;
};

using ValidationReport = std::vector<Violation>;

/// Reports shape mismatches (against layer 0 head 0) and non-finite rows.
/// One non-finite violation is emitted per offending row of keys or values.
ValidationReport validate_cache(const KVCache& cache);

/// Checks window shapes against the cache: one window per head, D matching,
/// equal row counts, finite entries.
ValidationReport validate_windows(const KVCache& cache, const WindowSet& windows);

std::string describe(const Violation& v);

}  // namespace kvmix
