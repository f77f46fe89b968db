// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "../oracle/oracle_values.hpp"
#include "../test_util.hpp"
#include "gtest_util.hpp"
#include "kvmix/redundancy.hpp"

using namespace kvmix;
using namespace kvmix::testing;

TEST(Redundancy, AnalyticCases) {
    const auto same = head_of(mat({{1, 0}, {1, 0}}));
    const auto ortho = head_of(mat({{1, 0}, {0, 1}}));
    const auto three = head_of(mat({{1, 0}, {1, 0}, {0, 1}}));
    for (const auto* h : {&same, &ortho, &three}) {
        EXPECT_NEAR(head_redundancy_fast(*h).r_bar, head_redundancy_naive(*h).r_bar, 1e-6);
    }
    EXPECT_NEAR(head_redundancy_fast(same).r_bar, 1.0, 1e-6);
    EXPECT_NEAR(head_redundancy_fast(ortho).r_bar, 0.0, 1e-6);
    EXPECT_NEAR(head_redundancy_fast(three).r_bar, oracle::kRedundancyE1E1E2, 1e-6);
    EXPECT_EQ(head_redundancy_fast(three).seq_len, 3u);
}

TEST(Redundancy, AntipodalPairClampsToZero) {
    const auto h = head_of(mat({{1, 0}, {-1, 0}}));
    for (const auto& r : {head_redundancy_fast(h), head_redundancy_naive(h)}) {
        EXPECT_NEAR(r.raw, -1.0, 1e-12);
        EXPECT_EQ(r.r_bar, 0.0);
    }
}

TEST(Redundancy, SingleKeyIsZero) {
    const auto h = head_of(mat({{3, 4}}));
    EXPECT_EQ(head_redundancy_fast(h).r_bar, 0.0);
    EXPECT_EQ(head_redundancy_naive(h).r_bar, 0.0);
}

TEST(Redundancy, NaiveRefusesAboveCeiling) {
    Gen g(1);
    const auto h = g.head(65, 2);
    EXPECT_KVMIX_ERROR(head_redundancy_naive(h, kDefaultEps, 64), ErrorCode::oracle_ceiling);
    EXPECT_NO_THROW(head_redundancy_naive(h, kDefaultEps, 65));
}

TEST(Redundancy, FastMatchesNaiveOnRandomHeads) {
    Gen g(2);
    for (int seed = 0; seed < 1000; ++seed) {
        const auto h = g.head(64, 16);
        EXPECT_NEAR(head_redundancy_fast(h).raw, head_redundancy_naive(h).raw, 1e-5);
    }
}

TEST(Redundancy, ZeroKeysAgree) {
    const auto h = head_of(mat({{0, 0}, {1, 0}, {1, 0}}));
    EXPECT_NEAR(head_redundancy_fast(h).raw, head_redundancy_naive(h).raw, 1e-12);
}

TEST(Mix, EndpointsAreExact) {
    Gen g(3);
    ScoreVector imp{{0.1, 0.7, 0.2, 0.0}, ScoreKind::integrated};
    ScoreVector div{{-0.3, 0.1, -0.9, 0.4}, ScoreKind::diversity_raw};
    EXPECT_EQ(mix_scores(imp, div, 0.0).scores, imp.scores);
    EXPECT_EQ(mix_scores(imp, div, 1.0).scores, scale_diversity(div, imp.mean()).scores);
    EXPECT_EQ(mix_scores(imp, div, 0.3).kind, ScoreKind::mixed);
}

TEST(Mix, FullDiversityWorkedExample) {
    ScoreVector imp{{0.3, 0.3, 0.3}, ScoreKind::integrated};
    ScoreVector div{{-0.5, -1.0, 0.0}, ScoreKind::diversity_raw};
    const auto out = mix_scores(imp, div, 1.0, 1e-6);
    EXPECT_NEAR(out.scores[0], oracle::kBlendFull0, 1e-4);
    EXPECT_NEAR(out.scores[1], oracle::kBlendFull1, 1e-4);
    EXPECT_NEAR(out.scores[2], oracle::kBlendFull2, 1e-4);
}

TEST(Mix, HalfBlendWorkedExample) {
    ScoreVector imp{{2.0, 0.0}, ScoreKind::integrated};
    ScoreVector div{{-1.0, 0.0}, ScoreKind::diversity_raw};
    const auto out = mix_scores(imp, div, 0.5, 1e-6);
    EXPECT_NEAR(out.scores[0], oracle::kBlendHalf0, 1e-4);
    EXPECT_NEAR(out.scores[1], oracle::kBlendHalf1, 1e-4);
}

TEST(Mix, RejectsBadInputs) {
    ScoreVector imp{{1, 2}, ScoreKind::integrated};
    ScoreVector div{{1, 2, 3}, ScoreKind::diversity_raw};
    EXPECT_KVMIX_ERROR(mix_scores(imp, div, 0.5), ErrorCode::dimension_mismatch);
    EXPECT_KVMIX_ERROR(mix_scores(imp, ScoreVector{{1, 2}, ScoreKind::diversity_raw}, 1.5), ErrorCode::invalid_argument);
}

TEST(Mix, HigherDiversityNeverLosesAtEqualImportance) {
    Gen g(4);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t t = g.size(2, 30);
        ScoreVector imp{std::vector<double>(t), ScoreKind::integrated};
        ScoreVector div{std::vector<double>(t), ScoreKind::diversity_raw};
        for (std::size_t i = 0; i < t; ++i) {
            imp.scores[i] = g.real(0, 1);
            div.scores[i] = g.real(-1, 1);
        }
        imp.scores[1] = imp.scores[0];
        const auto scaled = scale_diversity(div, imp.mean());
        const double r = trial == 0 ? 0.0 : g.real(0, 1);
        const auto out = mix_scores(imp, div, r);
        const std::size_t hi = scaled.scores[0] >= scaled.scores[1] ? 0 : 1;
        EXPECT_GE(out.scores[hi], out.scores[1 - hi]);
        if (r > 0 && scaled.scores[hi] > scaled.scores[1 - hi]) {
            EXPECT_GT(out.scores[hi], out.scores[1 - hi]);
        }
    }
}
