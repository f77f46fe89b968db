// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/error.hpp"

namespace kvmix {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument:
        return "invalid_argument";
    case ErrorCode::dimension_mismatch:
        return "dimension_mismatch";
    case ErrorCode::invalid_config:
        return "invalid_config";
    case ErrorCode::io_error:
        return "io_error";
    case ErrorCode::corrupt_manifest:
        return "corrupt_manifest";
    case ErrorCode::length_mismatch:
        return "length_mismatch";
    case ErrorCode::unsupported_dtype:
        return "unsupported_dtype";
    case ErrorCode::invalid_cache:
        return "invalid_cache";
    case ErrorCode::missing_windows:
        return "missing_windows";
    case ErrorCode::infeasible_budget:
        return "infeasible_budget";
    case ErrorCode::lineage_mismatch:
        return "lineage_mismatch";
    case ErrorCode::oracle_ceiling:
        return "oracle_ceiling";
    case ErrorCode::internal:
        return "internal";
    }
    return "internal";
}

int exit_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_config:
        return 2;
    case ErrorCode::internal:
        return 4;
    default:
        return 3;
    }
}

}  // namespace kvmix
