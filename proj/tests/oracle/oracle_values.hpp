// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// Generated by tests/oracle/derive_oracle_values.py. Do not edit.

#pragma once

namespace kvmix::oracle {

inline constexpr double kExtrinsicE1 = 0.6697615493266569;
inline constexpr double kExtrinsicE2 = 0.3302384506733431;
inline constexpr double kIntegratedPos0 = 1.6697595493302568;
inline constexpr double kIntegratedPos1 = 0.3302384506733431;
inline constexpr double kMatchScaleHalf0 = 0.999998000004;
inline constexpr double kMatchScalePoint2 = 0.9999950000249999;
inline constexpr double kDiversityOrthonormal = -0.5;
inline constexpr double kRedundancyE1E1E2 = 0.3333333333333333;
inline constexpr double kBlendFull0 = 0.2999994000006;
inline constexpr double kBlendFull1 = 0.0;
inline constexpr double kBlendFull2 = 0.5999988000012;
inline constexpr double kBlendHalf0 = 1.0;
inline constexpr double kBlendHalf1 = 0.999998000002;
inline constexpr double kPyramidLayer0 = 96.0;
inline constexpr double kPyramidLayer1 = 64.0;
inline constexpr double kPyramidLayer2 = 32.0;
inline constexpr double kAdaptiveHead0 = 80;
inline constexpr double kAdaptiveHead1 = 48;
inline constexpr double kCoverageE1E1E2Keep0 = 0.3333333333333333;

}  // namespace kvmix::oracle
