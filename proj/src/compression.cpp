// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/compression.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "kvmix/parallel.hpp"

namespace kvmix {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point since) {
    return std::chrono::duration<double, std::micro>(Clock::now() - since).count();
}

// Integer apportionment of `total` by real-valued shares (largest remainder,
// ties to the lower index). Shares must sum to `total` up to rounding.
std::vector<std::size_t> apportion(const std::vector<double>& shares, std::size_t total) {
    std::vector<std::size_t> out(shares.size());
    std::vector<double> remainder(shares.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double v = std::max(0.0, shares[i]);
        const double fl = std::floor(v + 1e-9);
        out[i] = static_cast<std::size_t>(fl);
        remainder[i] = v - fl;
        assigned += out[i];
    }
    std::vector<std::size_t> order(shares.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; k = (k + 1) % order.size()) {
        ++out[order[k]];
        ++assigned;
    }
    return out;
}

double sum_top(const std::vector<double>& scores, std::size_t k) {
    std::vector<double> tmp = scores;
    k = std::min(k, tmp.size());
    std::partial_sort(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), tmp.end(), std::greater<>());
    return std::accumulate(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
}

}  // namespace

std::string_view to_string(BasePolicy base) {
    switch (base) {
    case BasePolicy::snapkv:
        return "snapkv";
    case BasePolicy::knorm:
        return "knorm";
    case BasePolicy::vnorm:
        return "vnorm";
    case BasePolicy::pyramidkv:
        return "pyramidkv";
    case BasePolicy::adakv:
        return "adakv";
    }
    return "snapkv";
}

BasePolicy parse_base_policy(std::string_view name) {
    for (auto b : {BasePolicy::snapkv, BasePolicy::knorm, BasePolicy::vnorm, BasePolicy::pyramidkv, BasePolicy::adakv}) {
        if (to_string(b) == name) {
            return b;
        }
    }
    throw Error(ErrorCode::invalid_config, "unknown policy base '" + std::string(name) + "'");
}

std::string CompressionPolicy::name() const {
    return std::string(to_string(base)) + (mix ? "+mix" : "");
}

IntrinsicKind CompressionPolicy::resolved_intrinsic() const {
    if (intrinsic) {
        return *intrinsic;
    }
    return mix ? IntrinsicKind::vnorm : IntrinsicKind::none;
}

bool CompressionPolicy::needs_windows() const {
    return base == BasePolicy::snapkv || base == BasePolicy::pyramidkv || base == BasePolicy::adakv;
}

CompressionPolicy parse_policy(std::string_view text) {
    CompressionPolicy p;
    constexpr std::string_view suffix = "+mix";
    if (text.size() > suffix.size() && text.substr(text.size() - suffix.size()) == suffix) {
        p.mix = true;
        text.remove_suffix(suffix.size());
    }
    p.base = parse_base_policy(text);
    return p;
}

void validate(const CompressionPolicy& p) {
    if (p.budget < 1) {
        throw Error(ErrorCode::invalid_argument, "budget must be at least 1");
    }
    if (!(p.eps >= 0.0) || !std::isfinite(p.eps)) {
        throw Error(ErrorCode::invalid_argument, "eps must be finite and non-negative");
    }
    if (!(p.pyramid_beta >= 0.0 && p.pyramid_beta <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "pyramid beta must lie in [0, 1]");
    }
    if (!(p.adakv_floor_fraction >= 0.0 && p.adakv_floor_fraction <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "adakv floor fraction must lie in [0, 1]");
    }
    if (p.fixed_r_bar) {
        for (double r : *p.fixed_r_bar) {
            if (!(r >= 0.0 && r <= 1.0)) {
                throw Error(ErrorCode::invalid_argument, "fixed r_bar entries must lie in [0, 1]");
            }
        }
    }
}

StageTimings& StageTimings::operator+=(const StageTimings& o) noexcept {
    scoring_us += o.scoring_us;
    diversity_us += o.diversity_us;
    redundancy_us += o.redundancy_us;
    selection_us += o.selection_us;
    return *this;
}

HeadScores score_head_detailed(const HeadKV& head,
                               const ObservationWindow* window,
                               const CompressionPolicy& policy,
                               std::optional<double> r_bar_override) {
    validate(policy);
    const std::size_t t = head.seq_len();
    if (policy.window_len >= t) {
        throw Error(ErrorCode::invalid_argument, "window_len must be smaller than T");
    }
    const std::size_t prefix = t - policy.window_len;
    const KeyView keys = head.keys.view_rows(0, prefix);
    const KeyView values = head.values.view_rows(0, prefix);

    HeadScores out;
    auto start = Clock::now();
    if (policy.needs_windows()) {
        if (window == nullptr) {
            throw Error(ErrorCode::missing_windows, "policy " + policy.name() + " needs observation-window queries");
        }
        out.importance = integrated_importance(keys, values, window->queries, policy.resolved_intrinsic(), policy.eps);
        if (policy.resolved_intrinsic() == IntrinsicKind::none) {
            out.importance.kind = ScoreKind::extrinsic;
        }
    } else {
        out.importance = policy.base == BasePolicy::knorm ? knorm_scores(keys) : vnorm_scores(values);
        if (policy.mix) {
            // Blending needs a non-negative importance scale.
            out.importance = minmax_normalize(out.importance, policy.eps);
        }
    }
    out.timings.scoring_us = elapsed_us(start);

    if (!policy.mix) {
        out.final = out.importance;
        return out;
    }

    start = Clock::now();
    const KeyStatistics stats = key_statistics(keys, policy.eps);
    const ScoreVector diversity = diversity_scores(keys, stats, policy.eps);
    out.timings.diversity_us = elapsed_us(start);

    start = Clock::now();
    out.r_bar = r_bar_override ? *r_bar_override : head_redundancy_from_stats(stats).r_bar;
    out.timings.redundancy_us = elapsed_us(start);

    start = Clock::now();
    out.final = mix_scores(out.importance, diversity, out.r_bar, policy.eps);
    out.timings.selection_us = elapsed_us(start);
    return out;
}

ScoreVector score_head(const HeadKV& head, const ObservationWindow* window, const CompressionPolicy& policy) {
    return score_head_detailed(head, window, policy).final;
}

std::vector<std::size_t> top_b_select(const ScoreVector& scores,
                                      std::size_t seq_len,
                                      std::size_t budget,
                                      std::size_t window_len) {
    if (budget < 1) {
        throw Error(ErrorCode::invalid_argument, "budget must be at least 1");
    }
    if (window_len >= seq_len) {
        throw Error(ErrorCode::invalid_argument, "window_len must be smaller than T");
    }
    const std::size_t prefix = seq_len - window_len;
    if (scores.size() != prefix) {
        throw Error(ErrorCode::dimension_mismatch, "score vector must cover exactly the non-window positions");
    }
    std::vector<std::size_t> out;
    if (budget >= seq_len) {
        out.resize(seq_len);
        std::iota(out.begin(), out.end(), 0);
        return out;
    }
    if (budget <= window_len) {
        out.resize(budget);
        std::iota(out.begin(), out.end(), seq_len - budget);
        return out;
    }
    const std::size_t keep = budget - window_len;
    std::vector<std::size_t> order(prefix);
    std::iota(order.begin(), order.end(), 0);
    const auto& s = scores.scores;
    auto better = [&](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), better);
    order.resize(keep);
    std::sort(order.begin(), order.end());
    out = std::move(order);
    out.reserve(budget);
    for (std::size_t i = prefix; i < seq_len; ++i) {
        out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> allocate_budgets_pyramid(std::size_t layers,
                                                  std::size_t budget,
                                                  double beta,
                                                  std::size_t window_len) {
    if (layers < 1 || budget < 1) {
        throw Error(ErrorCode::invalid_argument, "pyramid allocation needs L >= 1 and B >= 1");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw Error(ErrorCode::invalid_argument, "pyramid beta must lie in [0, 1]");
    }
    const std::size_t floor = window_len + 1;
    if (budget < floor) {
        throw Error(ErrorCode::infeasible_budget,
                    "pyramid budget " + std::to_string(budget) + " cannot give every layer window_len + 1 = " +
                        std::to_string(floor));
    }
    if (layers == 1) {
        return {budget};
    }
    const double b = static_cast<double>(budget);
    const double span = static_cast<double>(layers - 1);
    std::vector<double> raw(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const double offset = static_cast<double>(layers - 1) - 2.0 * static_cast<double>(l);
        raw[l] = std::max(b * (1.0 + beta * offset / span), static_cast<double>(floor));
    }
    const double total = b * static_cast<double>(layers);
    const double excess = std::accumulate(raw.begin(), raw.end(), 0.0) - total;
    if (excess > 0.0) {
        double slack = 0.0;
        for (double v : raw) {
            slack += v - static_cast<double>(floor);
        }
        for (double& v : raw) {
            v -= excess * (v - static_cast<double>(floor)) / slack;
        }
    }
    return apportion(raw, layers * budget);
}

std::vector<std::size_t> allocate_budgets_adaptive(std::span<const double> masses, std::size_t budget, std::size_t floor) {
    const std::size_t heads = masses.size();
    if (heads < 1) {
        throw Error(ErrorCode::invalid_argument, "adaptive allocation needs at least one head");
    }
    if (floor < 1 || floor > budget) {
        throw Error(ErrorCode::infeasible_budget,
                    "adaptive floor " + std::to_string(floor) + " is infeasible for budget " + std::to_string(budget));
    }
    double total_mass = 0.0;
    for (double m : masses) {
        if (!(m >= 0.0) || !std::isfinite(m)) {
            throw Error(ErrorCode::invalid_argument, "allocation masses must be finite and non-negative");
        }
        total_mass += m;
    }
    if (total_mass == 0.0) {
        return std::vector<std::size_t>(heads, budget);
    }
    const std::size_t residual = heads * (budget - floor);
    std::vector<double> shares(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        shares[h] = static_cast<double>(residual) * masses[h] / total_mass;
    }
    auto out = apportion(shares, residual);
    for (auto& b : out) {
        b += floor;
    }
    return out;
}

std::size_t adakv_floor(const CompressionPolicy& policy) {
    const auto fraction = static_cast<std::size_t>(std::ceil(policy.adakv_floor_fraction * static_cast<double>(policy.budget)));
    return std::max(policy.window_len + 1, fraction);
}

CompressedHead compress_head(const HeadKV& head,
                             const ObservationWindow* window,
                             const CompressionPolicy& policy,
                             std::optional<std::size_t> budget_override,
                             std::optional<double> r_bar_override) {
    const std::size_t budget = budget_override.value_or(policy.budget);
    HeadScores scores = score_head_detailed(head, window, policy, r_bar_override);

    const auto start = Clock::now();
    CompressedHead out;
    out.retained = top_b_select(scores.final, head.seq_len(), budget, policy.window_len);
    out.keys = head.keys.gather_rows(out.retained);
    out.values = head.values.gather_rows(out.retained);
    scores.timings.selection_us += elapsed_us(start);

    out.r_bar = scores.r_bar;
    out.scores_used = std::move(scores.final);
    out.budget_effective = budget;
    out.timings = scores.timings;
    return out;
}

std::size_t CompressedCache::total_retained() const noexcept {
    std::size_t total = 0;
    for (const auto& e : entries) {
        total += e.retained.size();
    }
    return total;
}

double CompressedCache::compression_ratio() const noexcept {
    const double full = static_cast<double>(layers * heads * seq_len);
    return full == 0.0 ? 0.0 : static_cast<double>(total_retained()) / full;
}

CompressedCache compress_cache(const KVCache& cache,
                               const WindowSet* windows,
                               const CompressionPolicy& policy,
                               std::size_t workers) {
    validate(policy);
    const auto report = validate_cache(cache);
    if (!report.empty()) {
        throw Error(ErrorCode::invalid_cache, "cannot compress invalid cache: " + describe(report.front()));
    }
    const std::size_t layers = cache.num_layers();
    const std::size_t heads = cache.num_heads();
    const std::size_t t = cache.seq_len();
    if (policy.window_len >= t) {
        throw Error(ErrorCode::invalid_argument, "policy window_len must be smaller than T");
    }
    if (policy.needs_windows()) {
        if (windows == nullptr) {
            throw Error(ErrorCode::missing_windows, "policy " + policy.name() + " needs observation windows");
        }
        const auto wr = validate_windows(cache, *windows);
        if (!wr.empty()) {
            throw Error(ErrorCode::invalid_cache, "invalid observation windows: " + describe(wr.front()));
        }
    }
    if (policy.fixed_r_bar && policy.fixed_r_bar->size() != layers * heads) {
        throw Error(ErrorCode::dimension_mismatch, "fixed r_bar table must have one entry per head");
    }

    const std::size_t n = layers * heads;
    auto window_for = [&](std::size_t idx) -> const ObservationWindow* {
        return policy.needs_windows() ? &windows->at(idx / heads, idx % heads) : nullptr;
    };
    auto r_override = [&](std::size_t idx) -> std::optional<double> {
        if (policy.fixed_r_bar) {
            return (*policy.fixed_r_bar)[idx];
        }
        return std::nullopt;
    };

    std::vector<HeadScores> scored(n);
    parallel_for(n, workers, [&](std::size_t idx) {
        scored[idx] = score_head_detailed(cache.head(idx / heads, idx % heads), window_for(idx), policy, r_override(idx));
    });

    std::vector<std::size_t> budgets(n, policy.budget);
    if (policy.base == BasePolicy::pyramidkv) {
        const auto per_layer = allocate_budgets_pyramid(layers, policy.budget, policy.pyramid_beta, policy.window_len);
        for (std::size_t idx = 0; idx < n; ++idx) {
            budgets[idx] = per_layer[idx / heads];
        }
    } else if (policy.base == BasePolicy::adakv) {
        const std::size_t floor = adakv_floor(policy);
        for (std::size_t l = 0; l < layers; ++l) {
            std::vector<double> masses(heads);
            for (std::size_t h = 0; h < heads; ++h) {
                const auto& s = scored[l * heads + h];
                masses[h] = sum_top(policy.mixed_allocation_mass ? s.final.scores : s.importance.scores, policy.budget);
                masses[h] = std::max(0.0, masses[h]);
            }
            const auto per_head = allocate_budgets_adaptive(masses, policy.budget, floor);
            std::copy(per_head.begin(), per_head.end(), budgets.begin() + static_cast<std::ptrdiff_t>(l * heads));
        }
    }

    CompressedCache out;
    out.layers = layers;
    out.heads = heads;
    out.seq_len = t;
    out.head_dim = cache.head_dim();
    out.window_len = policy.window_len;
    out.policy = policy;
    out.entries.resize(n);
    parallel_for(n, workers, [&](std::size_t idx) {
        const auto& head = cache.head(idx / heads, idx % heads);
        auto& s = scored[idx];
        const auto start = Clock::now();
        CompressedHead e;
        e.retained = top_b_select(s.final, t, budgets[idx], policy.window_len);
        e.keys = head.keys.gather_rows(e.retained);
        e.values = head.values.gather_rows(e.retained);
        s.timings.selection_us += elapsed_us(start);
        e.r_bar = s.r_bar;
        e.scores_used = std::move(s.final);
        e.budget_effective = budgets[idx];
        e.timings = s.timings;
        out.entries[idx] = std::move(e);
    });
    return out;
}

}  // namespace kvmix
