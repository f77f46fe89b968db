// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kvmix/error.hpp"

namespace kvmix {

/// Read-only view over consecutive rows of a row-major matrix.
template <typename T>
struct RowsView {
    std::span<const T> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::span<const T> row(std::size_t r) const noexcept {
        return data.subspan(r * cols, cols);
    }
};

/// Dense row-major matrix with value semantics.
template <typename T>
class BasicMatrix {
public:
    using value_type = T;

    BasicMatrix() = default;
    BasicMatrix(std::size_t rows, std::size_t cols, T fill = T{})
        : m_rows(rows), m_cols(cols), m_data(rows * cols, fill) {}
    BasicMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
        : m_rows(rows), m_cols(cols), m_data(std::move(data)) {
        if (m_data.size() != rows * cols) {
            throw Error(ErrorCode::dimension_mismatch, "matrix data size does not match rows*cols");
        }
    }

    std::size_t rows() const noexcept {
        return m_rows;
    }
    std::size_t cols() const noexcept {
        return m_cols;
    }
    bool empty() const noexcept {
        return m_data.empty();
    }

    T& operator()(std::size_t r, std::size_t c) noexcept {
        return m_data[r * m_cols + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        return m_data[r * m_cols + c];
    }

    std::span<T> row(std::size_t r) noexcept {
        return {m_data.data() + r * m_cols, m_cols};
    }
    std::span<const T> row(std::size_t r) const noexcept {
        return {m_data.data() + r * m_cols, m_cols};
    }

    std::span<T> data() noexcept {
        return m_data;
    }
    std::span<const T> data() const noexcept {
        return m_data;
    }

    RowsView<T> view() const noexcept {
        return {m_data, m_rows, m_cols};
    }
    /// Rows [begin, end) without copying.
    RowsView<T> view_rows(std::size_t begin, std::size_t end) const noexcept {
        return {std::span<const T>(m_data).subspan(begin * m_cols, (end - begin) * m_cols), end - begin, m_cols};
    }

    /// Copies the listed rows, in order, into a new matrix.
    BasicMatrix gather_rows(std::span<const std::size_t> indices) const {
        BasicMatrix out(indices.size(), m_cols);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            auto src = row(indices[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    /// Rows [begin, end).
    BasicMatrix slice_rows(std::size_t begin, std::size_t end) const {
        BasicMatrix out(end - begin, m_cols);
        std::copy(m_data.begin() + static_cast<std::ptrdiff_t>(begin * m_cols),
                  m_data.begin() + static_cast<std::ptrdiff_t>(end * m_cols),
                  out.m_data.begin());
        return out;
    }

    friend bool operator==(const BasicMatrix&, const BasicMatrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<T> m_data;
};

using Matrix = BasicMatrix<float>;
using MatrixD = BasicMatrix<double>;

}  // namespace kvmix
