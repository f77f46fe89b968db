// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/cache_model.hpp"

#include <cmath>
#include <sstream>

namespace kvmix {

namespace {

bool row_finite(std::span<const float> row) {
    for (float v : row) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

void scan_non_finite(const Matrix& m,
                     const char* tensor,
                     std::size_t layer,
                     std::size_t head,
                     ValidationReport& report) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (!row_finite(m.row(r))) {
            report.push_back({ViolationKind::non_finite, layer, head, r, std::string("non-finite entry in ") + tensor});
        }
    }
}

}  // namespace

WindowSet::WindowSet(std::size_t layers, std::size_t heads, std::vector<ObservationWindow> windows)
    : m_layers(layers), m_heads(heads), m_windows(std::move(windows)) {
    if (m_windows.size() != layers * heads) {
        throw Error(ErrorCode::dimension_mismatch, "window set needs exactly one window per head");
    }
}

const ObservationWindow& WindowSet::at(std::size_t layer, std::size_t head) const {
    if (layer >= m_layers || head >= m_heads) {
        throw Error(ErrorCode::invalid_argument, "window index out of range");
    }
    return m_windows[layer * m_heads + head];
}

std::string to_string(ViolationKind kind) {
    switch (kind) {
    case ViolationKind::empty_cache:
        return "empty_cache";
    case ViolationKind::shape_mismatch:
        return "shape_mismatch";
    case ViolationKind::non_finite:
        return "non_finite";
    case ViolationKind::window_length:
        return "window_length";
    case ViolationKind::window_shape:
        return "window_shape";
    }
    return "unknown";
}

std::string describe(const Violation& v) {
    std::ostringstream os;
    os << to_string(v.kind);
    if (v.layer) {
        os << " layer=" << *v.layer;
    }
    if (v.head) {
        os << " head=" << *v.head;
    }
    if (v.position) {
        os << " position=" << *v.position;
    }
    if (!v.detail.empty()) {
        os << ": " << v.detail;
    }
    return os.str();
}

ValidationReport validate_cache(const KVCache& cache) {
    ValidationReport report;
    if (cache.layers.empty() || cache.layers.front().heads.empty()) {
        report.push_back({ViolationKind::empty_cache, {}, {}, {}, "cache has no layers or heads"});
        return report;
    }
    const std::size_t heads = cache.layers.front().heads.size();
    const std::size_t t = cache.layers.front().heads.front().keys.rows();
    const std::size_t d = cache.layers.front().heads.front().keys.cols();

    if (t == 0 || d == 0) {
        report.push_back({ViolationKind::shape_mismatch, 0, 0, {}, "T and D must be at least 1"});
    }

    for (std::size_t l = 0; l < cache.layers.size(); ++l) {
        const auto& layer = cache.layers[l];
        if (layer.heads.size() != heads) {
            std::ostringstream os;
            os << "layer has " << layer.heads.size() << " heads, expected " << heads;
            report.push_back({ViolationKind::shape_mismatch, l, {}, {}, os.str()});
        }
        for (std::size_t h = 0; h < layer.heads.size(); ++h) {
            const auto& head = layer.heads[h];
            const bool keys_ok = head.keys.rows() == t && head.keys.cols() == d;
            const bool values_ok = head.values.rows() == head.keys.rows() && head.values.cols() == head.keys.cols();
            if (!keys_ok || !values_ok) {
                std::ostringstream os;
                os << "keys " << head.keys.rows() << "x" << head.keys.cols() << ", values " << head.values.rows() << "x"
                   << head.values.cols() << ", expected " << t << "x" << d;
                report.push_back({ViolationKind::shape_mismatch, l, h, {}, os.str()});
            }
            scan_non_finite(head.keys, "keys", l, h, report);
            scan_non_finite(head.values, "values", l, h, report);
        }
    }

    if (cache.window_len < 1 || cache.window_len >= t) {
        std::ostringstream os;
        os << "window_len " << cache.window_len << " must satisfy 1 <= window_len < T=" << t;
        report.push_back({ViolationKind::window_length, {}, {}, {}, os.str()});
    }
    return report;
}

ValidationReport validate_windows(const KVCache& cache, const WindowSet& windows) {
    ValidationReport report;
    if (windows.num_layers() != cache.num_layers() || windows.num_heads() != cache.num_heads()) {
        report.push_back({ViolationKind::window_shape, {}, {}, {}, "window grid does not match cache L x H"});
        return report;
    }
    const std::size_t rows = windows.effective_rows();
    for (std::size_t l = 0; l < windows.num_layers(); ++l) {
        for (std::size_t h = 0; h < windows.num_heads(); ++h) {
            const auto& w = windows.at(l, h);
            if (w.queries.rows() != rows || rows == 0 || w.queries.cols() != cache.head_dim()) {
                report.push_back({ViolationKind::window_shape, l, h, {}, "window rows or D mismatch"});
            }
            scan_non_finite(w.queries, "window queries", l, h, report);
        }
    }
    return report;
}

}  // namespace kvmix
