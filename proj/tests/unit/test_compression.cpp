// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include <numeric>

#include "../oracle/oracle_values.hpp"
#include "../test_util.hpp"
#include "gtest_util.hpp"
#include "kvmix/compressed_dump.hpp"
#include "kvmix/compression.hpp"
#include "kvmix/synth.hpp"

using namespace kvmix;
using namespace kvmix::testing;

namespace {

std::vector<std::size_t> range(std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> v(hi - lo);
    std::iota(v.begin(), v.end(), lo);
    return v;
}

// Keys e1, e2 followed by one window position; values (3,4), (0,0), (1,1).
HeadKV worked_head() {
    return head_of(mat({{1, 0}, {0, 1}, {0.5f, 0.5f}}), mat({{3, 4}, {0, 0}, {1, 1}}));
}

CompressionPolicy policy(BasePolicy base, bool mix, std::size_t budget, std::size_t window_len) {
    CompressionPolicy p;
    p.base = base;
    p.mix = mix;
    p.budget = budget;
    p.window_len = window_len;
    return p;
}

synth::GeneratedCache synthetic(std::uint64_t seed, std::size_t layers = 2, std::size_t heads = 4, std::size_t t = 256) {
    synth::SynthHeadParams p;
    p.seq_len = t;
    p.head_dim = 16;
    p.window_len = 16;
    p.seed = seed;
    return synth::gen_cache(synth::uniform_grid(p, layers, heads));
}

}  // namespace

TEST(Policy, ParseAndName) {
    const auto p = parse_policy("adakv+mix");
    EXPECT_EQ(p.base, BasePolicy::adakv);
    EXPECT_TRUE(p.mix);
    EXPECT_EQ(p.name(), "adakv+mix");
    EXPECT_EQ(parse_policy("knorm").name(), "knorm");
    EXPECT_KVMIX_ERROR(parse_policy("h2o"), ErrorCode::invalid_config);
    EXPECT_KVMIX_ERROR(parse_policy("snapkv+max"), ErrorCode::invalid_config);
    EXPECT_EQ(p.resolved_intrinsic(), IntrinsicKind::vnorm);
    EXPECT_EQ(parse_policy("snapkv").resolved_intrinsic(), IntrinsicKind::none);
    EXPECT_TRUE(parse_policy("pyramidkv").needs_windows());
    EXPECT_FALSE(parse_policy("vnorm+mix").needs_windows());
    auto bad = p;
    bad.budget = 0;
    EXPECT_KVMIX_ERROR(validate(bad), ErrorCode::invalid_argument);
}

TEST(TopB, WorkedExampleKeepsTopTwoPlusWindow) {
    const auto kept = top_b_select({{0.9, 0.1, 0.5}, ScoreKind::extrinsic}, 35, 34, 32);
    auto expected = range(3, 35);
    expected.insert(expected.begin(), {0, 2});
    EXPECT_EQ(kept, expected);
}

TEST(TopB, FullBudgetIsIdentity) {
    EXPECT_EQ(top_b_select({{0.2, 0.1, 0.5, 0.3}, ScoreKind::extrinsic}, 6, 6, 2), range(0, 6));
    EXPECT_EQ(top_b_select({{0.2, 0.1, 0.5, 0.3}, ScoreKind::extrinsic}, 6, 100, 2), range(0, 6));
}

TEST(TopB, TieGoesToEarlierIndex) {
    EXPECT_EQ(top_b_select({{0.5, 0.5, 0.1}, ScoreKind::extrinsic}, 4, 2, 1), (std::vector<std::size_t>{0, 3}));
}

TEST(TopB, BudgetInsideWindowKeepsMostRecent) {
    EXPECT_EQ(top_b_select({{9, 9, 9}, ScoreKind::extrinsic}, 8, 3, 5), range(5, 8));
    EXPECT_EQ(top_b_select({{9, 9, 9}, ScoreKind::extrinsic}, 8, 5, 5), range(3, 8));
}

TEST(TopB, RejectsBadArguments) {
    EXPECT_KVMIX_ERROR(top_b_select({{1, 2}, ScoreKind::extrinsic}, 3, 0, 1), ErrorCode::invalid_argument);
    EXPECT_KVMIX_ERROR(top_b_select({{1, 2, 3}, ScoreKind::extrinsic}, 3, 2, 1), ErrorCode::dimension_mismatch);
}

TEST(ScoreHead, SnapKVIsExtrinsicOverPrefix) {
    const auto head = worked_head();
    const auto w = window_of(mat({{1, 0}}));
    const auto s = score_head(head, &w, policy(BasePolicy::snapkv, false, 2, 1));
    ASSERT_EQ(s.size(), 2u);
    EXPECT_NEAR(s.scores[0], oracle::kExtrinsicE1, 1e-4);
    EXPECT_NEAR(s.scores[1], oracle::kExtrinsicE2, 1e-4);
}

TEST(ScoreHead, MixOnOrthonormalPrefixEqualsIntegrated) {
    const auto head = worked_head();
    const auto w = window_of(mat({{1, 0}}));
    const auto detail = score_head_detailed(head, &w, policy(BasePolicy::snapkv, true, 2, 1));
    EXPECT_EQ(detail.r_bar, 0.0);
    const auto prefix = head.keys.view_rows(0, 2);
    const auto expected = integrated_importance(prefix, head.values.view_rows(0, 2), w.queries, IntrinsicKind::vnorm);
    EXPECT_EQ(detail.final.scores, expected.scores);
}

TEST(ScoreHead, VNormPassthroughNeedsNoWindow) {
    const auto s = score_head(worked_head(), nullptr, policy(BasePolicy::vnorm, false, 2, 1));
    EXPECT_EQ(s.scores, (std::vector<double>{5.0, 0.0}));
    EXPECT_KVMIX_ERROR(score_head(worked_head(), nullptr, policy(BasePolicy::snapkv, false, 2, 1)),
                       ErrorCode::missing_windows);
}

TEST(ScoreHead, FixedRBarOverridesMeasured) {
    const auto head = worked_head();
    const auto w = window_of(mat({{1, 0}}));
    const auto d = score_head_detailed(head, &w, policy(BasePolicy::snapkv, true, 2, 1), 1.0);
    EXPECT_EQ(d.r_bar, 1.0);
    EXPECT_EQ(d.final.scores, scale_diversity(diversity_scores(head.keys.view_rows(0, 2)), d.importance.mean()).scores);
}

TEST(Pyramid, Examples) {
    EXPECT_EQ(allocate_budgets_pyramid(4, 64, 0.0, 32), (std::vector<std::size_t>{64, 64, 64, 64}));
    const auto three = allocate_budgets_pyramid(3, 64, 0.5, 8);
    EXPECT_EQ(three[0], static_cast<std::size_t>(oracle::kPyramidLayer0));
    EXPECT_EQ(three[1], static_cast<std::size_t>(oracle::kPyramidLayer1));
    EXPECT_EQ(three[2], static_cast<std::size_t>(oracle::kPyramidLayer2));
    EXPECT_EQ(allocate_budgets_pyramid(2, 33, 0.5, 32), (std::vector<std::size_t>{33, 33}));
    EXPECT_EQ(allocate_budgets_pyramid(1, 70, 1.0, 32), (std::vector<std::size_t>{70}));
    EXPECT_KVMIX_ERROR(allocate_budgets_pyramid(2, 20, 0.5, 32), ErrorCode::infeasible_budget);
}

TEST(Pyramid, ClampedScheduleStillSumsExactly) {
    for (std::size_t layers = 1; layers <= 12; ++layers) {
        for (std::size_t b : {33u, 40u, 64u, 100u, 257u}) {
            for (double beta : {0.0, 0.3, 0.5, 1.0}) {
                const auto out = allocate_budgets_pyramid(layers, b, beta, 32);
                EXPECT_EQ(std::accumulate(out.begin(), out.end(), std::size_t{0}), layers * b);
                for (std::size_t x : out) {
                    EXPECT_GE(x, 33u);
                }
                for (std::size_t l = 1; l < out.size(); ++l) {
                    EXPECT_GE(out[l - 1], out[l]);
                }
            }
        }
    }
}

TEST(Adaptive, Examples) {
    const std::vector<double> equal{1, 1, 1, 1};
    EXPECT_EQ(allocate_budgets_adaptive(equal, 64, 33), (std::vector<std::size_t>{64, 64, 64, 64}));
    const std::vector<double> skew{3, 1};
    const auto out = allocate_budgets_adaptive(skew, 64, 33);
    EXPECT_EQ(out[0], static_cast<std::size_t>(oracle::kAdaptiveHead0));
    EXPECT_EQ(out[1], static_cast<std::size_t>(oracle::kAdaptiveHead1));
    const std::vector<double> zero{0, 0};
    EXPECT_EQ(allocate_budgets_adaptive(zero, 64, 33), (std::vector<std::size_t>{64, 64}));
    EXPECT_KVMIX_ERROR(allocate_budgets_adaptive(skew, 64, 65), ErrorCode::infeasible_budget);
    const std::vector<double> negative{1, -1};
    EXPECT_KVMIX_ERROR(allocate_budgets_adaptive(negative, 64, 33), ErrorCode::invalid_argument);
}

TEST(Adaptive, FloorFollowsFraction) {
    auto p = policy(BasePolicy::adakv, false, 100, 32);
    EXPECT_EQ(adakv_floor(p), 50u);
    p.budget = 40;
    EXPECT_EQ(adakv_floor(p), 33u);
}

TEST(CompressHead, FullBudgetIsIdentity) {
    Gen g(1);
    const auto head = g.head(20, 4);
    const auto w = window_of(g.matrix(4, 4));
    const auto c = compress_head(head, &w, policy(BasePolicy::snapkv, true, 25, 4));
    EXPECT_EQ(c.retained, range(0, 20));
    EXPECT_TRUE(c.keys == head.keys);
    EXPECT_TRUE(c.values == head.values);
}

TEST(CompressHead, WorkedExampleKeepsFirstKeyAndWindow) {
    const auto head = worked_head();
    const auto w = window_of(mat({{1, 0}}));
    const std::vector<std::size_t> expected{0, 2};
    const auto snap = compress_head(head, &w, policy(BasePolicy::snapkv, false, 2, 1));
    EXPECT_EQ(snap.retained, expected);
    EXPECT_EQ(snap.r_bar, 0.0);
    EXPECT_EQ(snap.budget_effective, 2u);
    EXPECT_TRUE(snap.keys == head.keys.gather_rows(expected));
    EXPECT_EQ(compress_head(head, nullptr, policy(BasePolicy::vnorm, false, 2, 1)).retained, expected);
}

TEST(CompressCache, UniformRatio) {
    synth::SynthHeadParams p;
    p.seq_len = 1024;
    p.head_dim = 16;
    const auto g = synth::gen_cache(synth::uniform_grid(p, 2, 4));
    const auto c = compress_cache(g.cache, &g.windows, policy(BasePolicy::snapkv, true, 64, 32));
    EXPECT_DOUBLE_EQ(c.compression_ratio(), 0.0625);
    EXPECT_EQ(c.total_retained(), 2u * 4 * 64);
    for (const auto& e : c.entries) {
        EXPECT_GE(e.r_bar, 0.0);
        EXPECT_LE(e.r_bar, 1.0);
    }
}

TEST(CompressCache, AllocatorsConservePerLayerTotals) {
    const auto g = synthetic(2, 3, 4);
    for (bool mix : {false, true}) {
        const auto ada = compress_cache(g.cache, &g.windows, policy(BasePolicy::adakv, mix, 48, 16));
        for (std::size_t l = 0; l < 3; ++l) {
            std::size_t sum = 0;
            for (std::size_t h = 0; h < 4; ++h) {
                sum += ada.at(l, h).retained.size();
                EXPECT_EQ(ada.at(l, h).retained.size(), ada.at(l, h).budget_effective);
            }
            EXPECT_EQ(sum, 4u * 48);
        }
        const auto pyr = compress_cache(g.cache, &g.windows, policy(BasePolicy::pyramidkv, mix, 48, 16));
        EXPECT_EQ(pyr.total_retained(), 3u * 4 * 48);
        EXPECT_GT(pyr.at(0, 0).retained.size(), pyr.at(2, 0).retained.size());
    }
}

TEST(CompressCache, MissingWindowsOnlyMatterForAttentionBases) {
    const auto g = synthetic(3, 1, 2);
    EXPECT_KVMIX_ERROR(compress_cache(g.cache, nullptr, policy(BasePolicy::snapkv, false, 32, 16)),
                       ErrorCode::missing_windows);
    EXPECT_NO_THROW(compress_cache(g.cache, nullptr, policy(BasePolicy::knorm, true, 32, 16)));
}

TEST(CompressCache, FixedRBarTableIsUsedPerHead) {
    const auto g = synthetic(4, 1, 2);
    auto p = policy(BasePolicy::snapkv, true, 32, 16);
    p.fixed_r_bar = std::vector<double>{0.25, 0.75};
    const auto c = compress_cache(g.cache, &g.windows, p);
    EXPECT_EQ(c.at(0, 0).r_bar, 0.25);
    EXPECT_EQ(c.at(0, 1).r_bar, 0.75);
    p.fixed_r_bar = std::vector<double>{0.5};
    EXPECT_KVMIX_ERROR(compress_cache(g.cache, &g.windows, p), ErrorCode::dimension_mismatch);
}

TEST(CompressCache, WorkerCountDoesNotChangeResult) {
    const auto g = synthetic(5);
    for (auto base : {BasePolicy::snapkv, BasePolicy::adakv, BasePolicy::pyramidkv}) {
        const auto p = policy(base, true, 40, 16);
        const auto a = compress_cache(g.cache, &g.windows, p, 1);
        const auto b = compress_cache(g.cache, &g.windows, p, 8);
        for (std::size_t i = 0; i < a.entries.size(); ++i) {
            EXPECT_EQ(a.entries[i].retained, b.entries[i].retained);
            EXPECT_EQ(a.entries[i].r_bar, b.entries[i].r_bar);
        }
    }
}

TEST(CompressedDump, RoundTripAndLineage) {
    TempDir dir("cdump");
    const auto g = synthetic(6, 2, 2, 64);
    save_dump(g.cache, g.windows, dir / "src.kvdump", 6);
    const auto src = load_dump(dir / "src.kvdump");
    const auto c = compress_cache(g.cache, &g.windows, policy(BasePolicy::adakv, true, 24, 16));
    const auto fp = file_fingerprint(dir / "src.kvdump");
    save_compressed_dump(c, src.manifest, fp, dir / "c.kvdump");
    const auto back = load_compressed_dump(dir / "c.kvdump");
    EXPECT_EQ(back.lineage, hex64(fp));
    EXPECT_EQ(back.cache.policy.name(), "adakv+mix");
    ASSERT_EQ(back.cache.entries.size(), c.entries.size());
    for (std::size_t i = 0; i < c.entries.size(); ++i) {
        EXPECT_EQ(back.cache.entries[i].retained, c.entries[i].retained);
        EXPECT_TRUE(back.cache.entries[i].keys == c.entries[i].keys);
        EXPECT_TRUE(back.cache.entries[i].values == c.entries[i].values);
        EXPECT_EQ(back.cache.entries[i].r_bar, c.entries[i].r_bar);
        EXPECT_EQ(back.cache.entries[i].budget_effective, c.entries[i].budget_effective);
    }
    EXPECT_KVMIX_ERROR(load_dump(dir / "c.kvdump"), ErrorCode::invalid_argument);
    EXPECT_KVMIX_ERROR(load_compressed_dump(dir / "src.kvdump"), ErrorCode::invalid_argument);

    const auto report = compression_report(c);
    EXPECT_EQ(report["heads"].size(), 4u);
    EXPECT_EQ(report["policy"]["base"], "adakv");
}

TEST(CompressedDump, PolicyJsonRoundTrip) {
    auto p = policy(BasePolicy::pyramidkv, true, 77, 9);
    p.pyramid_beta = 0.25;
    p.intrinsic = IntrinsicKind::knorm;
    p.fixed_r_bar = std::vector<double>{0.1, 0.2};
    const auto back = policy_from_json(policy_to_json(p));
    EXPECT_EQ(policy_to_json(back), policy_to_json(p));
}
