// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kvmix {

enum class ErrorCode {
    invalid_argument,
    dimension_mismatch,
    invalid_config,
    io_error,
    corrupt_manifest,
    length_mismatch,
    unsupported_dtype,
    invalid_cache,
    missing_windows,
    infeasible_budget,
    lineage_mismatch,
    oracle_ceiling,
    internal,
};

std::string_view to_string(ErrorCode code);

/// Process exit status for a failure of the given kind:
/// 2 for configuration errors, 3 for data errors, 4 for internal errors.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), m_code(code) {}

    ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

}  // namespace kvmix
