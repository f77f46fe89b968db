// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// Randomized structural properties of the compression pipeline. Each check
// runs `cases` generated inputs and reports how many violated the property.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "kvmix/compression.hpp"
#include "kvmix/kvdump.hpp"
#include "test_util.hpp"

namespace kvmix::testing {

struct PropertyResult {
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string first_failure;

    bool ok() const {
        return cases > 0 && failures == 0;
    }
    void fail(const std::string& what) {
        if (failures++ == 0) {
            first_failure = what;
        }
    }
};

namespace detail {

inline CompressionPolicy random_policy(Gen& g, std::size_t budget, std::size_t window_len) {
    static constexpr BasePolicy kBases[] = {BasePolicy::snapkv, BasePolicy::knorm, BasePolicy::vnorm};
    CompressionPolicy p;
    p.base = kBases[g.size(0, 2)];
    p.mix = g.size(0, 1) == 1;
    p.budget = budget;
    p.window_len = window_len;
    return p;
}

inline ScoreVector random_scores(Gen& g, std::size_t n) {
    // Coarse values so ties are common.
    ScoreVector s{std::vector<double>(n), ScoreKind::mixed};
    for (double& x : s.scores) {
        x = static_cast<double>(g.size(0, 6)) / 4.0;
    }
    return s;
}

inline bool sorted_unique(const std::vector<std::size_t>& v) {
    return std::adjacent_find(v.begin(), v.end(), [](auto a, auto b) { return a >= b; }) == v.end();
}

inline std::string at(std::size_t c) {
    return "case " + std::to_string(c) + ": ";
}

}  // namespace detail

/// |retained| = min(B, T) per head and allocators conserve their totals.
inline PropertyResult prop_budget_exactness(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"budget exactness", cases, 0, {}};
    Gen g(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        if (c % 2 == 0) {
            const std::size_t t = g.size(2, 60), d = g.size(1, 8);
            const std::size_t w = g.size(1, t - 1);
            const auto head = g.head(t, d);
            const auto window = window_of(g.matrix(g.size(1, 4), d));
            const auto p = detail::random_policy(g, g.size(1, t + 5), w);
            const auto out = compress_head(head, &window, p);
            if (out.retained.size() != std::min(p.budget, t) || !detail::sorted_unique(out.retained) ||
                out.retained.back() >= t) {
                r.fail(detail::at(c) + p.name() + " T=" + std::to_string(t) + " B=" + std::to_string(p.budget) +
                       " kept " + std::to_string(out.retained.size()));
            }
        } else {
            const std::size_t layers = g.size(1, 3), heads = g.size(1, 4), w = g.size(1, 4), d = g.size(1, 6);
            const std::size_t b = g.size(w + 1, 12);
            const std::size_t t = std::max<std::size_t>(heads, 2) * b + g.size(0, 10);
            const auto cache = g.cache(layers, heads, t, d, w);
            const auto windows = g.windows(layers, heads, g.size(1, 3), d);
            CompressionPolicy p;
            p.base = g.size(0, 1) == 0 ? BasePolicy::pyramidkv : BasePolicy::adakv;
            p.mix = g.size(0, 1) == 1;
            p.budget = b;
            p.window_len = w;
            p.pyramid_beta = g.real(0, 1);
            const auto out = compress_cache(cache, &windows, p);
            bool ok = out.total_retained() == layers * heads * b;
            for (std::size_t l = 0; l < layers && ok && p.base == BasePolicy::adakv; ++l) {
                std::size_t sum = 0;
                for (std::size_t h = 0; h < heads; ++h) {
                    sum += out.at(l, h).retained.size();
                }
                ok = sum == heads * b;
            }
            for (const auto& e : out.entries) {
                ok = ok && e.retained.size() == std::min(e.budget_effective, t) && detail::sorted_unique(e.retained);
            }
            if (!ok) {
                r.fail(detail::at(c) + p.name() + " allocator total off");
            }
        }
    }
    return r;
}

/// Window positions are always kept when B > window_len; otherwise the last B.
inline PropertyResult prop_window_retention(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"window retention", cases, 0, {}};
    Gen g(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t t = g.size(2, 60), d = g.size(1, 8);
        const std::size_t w = g.size(1, t - 1);
        const auto head = g.head(t, d);
        const auto window = window_of(g.matrix(g.size(1, 4), d));
        const auto p = detail::random_policy(g, g.size(1, t), w);
        const auto kept = compress_head(head, &window, p).retained;
        bool ok = true;
        if (p.budget > w) {
            for (std::size_t i = t - w; i < t; ++i) {
                ok = ok && std::binary_search(kept.begin(), kept.end(), i);
            }
        } else {
            ok = kept.size() == p.budget && kept.front() == t - p.budget && kept.back() == t - 1;
        }
        if (!ok) {
            r.fail(detail::at(c) + "window not retained, T=" + std::to_string(t) + " w=" + std::to_string(w) +
                   " B=" + std::to_string(p.budget));
        }
    }
    return r;
}

/// retained(B1) is a subset of retained(B2) for B1 <= B2 under fixed scores.
inline PropertyResult prop_nested_budgets(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"nested-budget monotonicity", cases, 0, {}};
    Gen g(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t t = g.size(2, 80);
        const std::size_t w = g.size(0, 1) == 0 ? g.size(1, t - 1) : 1;
        const auto scores = detail::random_scores(g, t - w);
        const std::size_t b1 = g.size(1, t);
        const std::size_t b2 = g.size(b1, t + 3);
        const auto a = top_b_select(scores, t, b1, w);
        const auto b = top_b_select(scores, t, b2, w);
        if (!std::includes(b.begin(), b.end(), a.begin(), a.end())) {
            r.fail(detail::at(c) + "B1=" + std::to_string(b1) + " not nested in B2=" + std::to_string(b2));
        }
    }
    return r;
}

/// Removing a position that was not retained does not change the rest.
inline PropertyResult prop_score_order_consistency(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"score-order consistency", cases, 0, {}};
    Gen g(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t t = g.size(3, 80);
        const std::size_t w = g.size(1, t - 2);
        const std::size_t b = g.size(w + 1, t - 1);
        auto scores = detail::random_scores(g, t - w);
        const auto kept = top_b_select(scores, t, b, w);
        std::vector<std::size_t> dropped;
        for (std::size_t i = 0; i < t - w; ++i) {
            if (!std::binary_search(kept.begin(), kept.end(), i)) {
                dropped.push_back(i);
            }
        }
        if (dropped.empty()) {
            r.fail(detail::at(c) + "no dropped position");
            continue;
        }
        const std::size_t victim = dropped[g.size(0, dropped.size() - 1)];
        scores.scores.erase(scores.scores.begin() + static_cast<std::ptrdiff_t>(victim));
        auto again = top_b_select(scores, t - 1, b, w);
        for (auto& i : again) {
            i += i >= victim ? 1 : 0;
        }
        if (again != kept) {
            r.fail(detail::at(c) + "retained set changed after removing position " + std::to_string(victim));
        }
    }
    return r;
}

/// r = 0 returns importance and r = 1 returns scaled diversity, bit for bit.
inline PropertyResult prop_blend_endpoints(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"blend endpoint identities", cases, 0, {}};
    Gen g(seed);
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t t = g.size(1, 50);
        ScoreVector imp{std::vector<double>(t), ScoreKind::integrated};
        ScoreVector div{std::vector<double>(t), ScoreKind::diversity_raw};
        const double scale = std::pow(10.0, g.real(-6, 3));
        for (std::size_t i = 0; i < t; ++i) {
            imp.scores[i] = scale * g.real(0, 1);
            div.scores[i] = g.real(-1, 1);
        }
        const auto zero = mix_scores(imp, div, 0.0);
        const auto one = mix_scores(imp, div, 1.0);
        if (zero.scores != imp.scores || one.scores != scale_diversity(div, imp.mean()).scores) {
            r.fail(detail::at(c) + "endpoint mismatch at T=" + std::to_string(t));
        }
    }
    return r;
}

/// load(save(x)) reproduces every float bit pattern, windows included.
inline PropertyResult prop_dump_round_trip(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"dump round-trip bit-exactness", cases, 0, {}};
    Gen g(seed);
    TempDir dir("prop_rt");
    const float specials[] = {-0.0f, std::numeric_limits<float>::denorm_min(), std::numeric_limits<float>::max(),
                              std::numeric_limits<float>::lowest(), 1e-38f, 3.4028e38f};
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t layers = g.size(1, 3), heads = g.size(1, 3), t = g.size(2, 24), d = g.size(1, 8);
        auto cache = g.cache(layers, heads, t, d, g.size(1, t - 1));
        for (int k = 0; k < 3; ++k) {
            auto& h = cache.layers[g.size(0, layers - 1)].heads[g.size(0, heads - 1)];
            h.keys(g.size(0, t - 1), g.size(0, d - 1)) = specials[g.size(0, 5)];
        }
        std::optional<WindowSet> windows;
        if (g.size(0, 1) == 1) {
            windows = g.windows(layers, heads, g.size(1, 6), d);
        }
        const auto path = dir / ("c" + std::to_string(c) + ".kvdump");
        save_dump(cache, windows, path, c);
        const auto back = load_dump(path);
        bool ok = back.windows.has_value() == windows.has_value() && back.cache.window_len == cache.window_len;
        for (std::size_t l = 0; l < layers && ok; ++l) {
            for (std::size_t h = 0; h < heads && ok; ++h) {
                const auto& a = cache.head(l, h);
                const auto& b = back.cache.head(l, h);
                ok = std::memcmp(a.keys.data().data(), b.keys.data().data(), a.keys.data().size_bytes()) == 0 &&
                     std::memcmp(a.values.data().data(), b.values.data().data(), a.values.data().size_bytes()) == 0;
            }
        }
        if (ok && windows) {
            ok = *windows == *back.windows;
        }
        if (!ok) {
            r.fail(detail::at(c) + "round trip differs");
        }
        std::filesystem::remove(path);
    }
    return r;
}

/// Same inputs give the same retained sets regardless of worker count.
inline PropertyResult prop_determinism(std::size_t cases, std::uint64_t seed) {
    PropertyResult r{"parallel determinism", cases, 0, {}};
    Gen g(seed);
    static constexpr BasePolicy kBases[] = {BasePolicy::snapkv, BasePolicy::knorm, BasePolicy::vnorm,
                                            BasePolicy::pyramidkv, BasePolicy::adakv};
    for (std::size_t c = 0; c < cases; ++c) {
        const std::size_t layers = g.size(1, 3), heads = g.size(1, 4), d = g.size(1, 6), w = g.size(1, 4);
        const std::size_t b = g.size(w + 1, 12);
        const std::size_t t = 4 * b + g.size(0, 10);
        const auto cache = g.cache(layers, heads, t, d, w);
        const auto windows = g.windows(layers, heads, 2, d);
        CompressionPolicy p;
        p.base = kBases[g.size(0, 4)];
        p.mix = g.size(0, 1) == 1;
        p.budget = b;
        p.window_len = w;
        const auto one = compress_cache(cache, &windows, p, 1);
        const auto many = compress_cache(cache, &windows, p, g.size(2, 8));
        bool ok = true;
        for (std::size_t i = 0; i < one.entries.size(); ++i) {
            ok = ok && one.entries[i].retained == many.entries[i].retained && one.entries[i].r_bar == many.entries[i].r_bar;
        }
        if (!ok) {
            r.fail(detail::at(c) + p.name() + " differs across worker counts");
        }
    }
    return r;
}

inline std::vector<PropertyResult> run_all_properties(std::size_t cases, std::uint64_t seed) {
    return {prop_budget_exactness(cases, seed),         prop_window_retention(cases, seed + 1),
            prop_nested_budgets(cases, seed + 2),       prop_score_order_consistency(cases, seed + 3),
            prop_blend_endpoints(cases, seed + 4),      prop_dump_round_trip(cases, seed + 5),
            prop_determinism(cases, seed + 6)};
}

}  // namespace kvmix::testing
