// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace kvmix::synth {

namespace {

enum Stream : std::uint64_t {
    centers_stream = 1,
    assign_stream = 2,
    keys_stream = 3,
    values_stream = 4,
    window_stream = 5,
    eval_stream = 6,
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// The standard distributions are implementation-defined, so gaussians and
// uniforms are derived from raw mt19937_64 output to keep dumps identical
// across standard libraries.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0)
        : m_engine(splitmix64(splitmix64(seed ^ (stream * 0xd1b54a32d192ed03ULL)) ^ splitmix64(sub))) {}

    double uniform() {
        return static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        m_spare = radius * std::sin(angle);
        m_has_spare = true;
        return radius * std::cos(angle);
    }

    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(m_engine() % n);
    }

private:
    std::mt19937_64 m_engine;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return std::sqrt(s);
}

void scale_into(const std::vector<double>& v, double factor, std::span<float> out) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(v[i] * factor);
    }
}

std::vector<std::vector<double>> draw_centers(const SynthHeadParams& p) {
    Rng rng(p.seed, centers_stream);
    std::vector<std::vector<double>> centers;
    centers.reserve(p.n_clusters);
    while (centers.size() < p.n_clusters) {
        std::vector<double> c(p.head_dim);
        for (double& x : c) {
            x = rng.normal();
        }
        if (p.orthogonal_centers) {
            for (const auto& prev : centers) {
                double d = 0.0;
                for (std::size_t i = 0; i < c.size(); ++i) {
                    d += c[i] * prev[i];
                }
                for (std::size_t i = 0; i < c.size(); ++i) {
                    c[i] -= d * prev[i];
                }
            }
        }
        const double n = norm(c);
        if (n < 1e-9) {
            continue;
        }
        for (double& x : c) {
            x /= n;
        }
        centers.push_back(std::move(c));
    }
    return centers;
}

// sharpness * unit(center + noise * g), or a random direction without a center.
void draw_query(Rng& rng,
                const std::vector<std::vector<double>>& centers,
                const SynthHeadParams& p,
                std::span<float> out) {
    const double noise = p.query_spread.value_or(p.spread);
    std::vector<double> q(p.head_dim, 0.0);
    if (p.hot_clusters > 0) {
        const auto& c = centers[rng.below(p.hot_clusters)];
        for (std::size_t i = 0; i < q.size(); ++i) {
            q[i] = c[i] + noise * rng.normal();
        }
    } else {
        for (double& x : q) {
            x = rng.normal();
        }
    }
    const double n = norm(q);
    scale_into(q, n > 0.0 ? p.query_sharpness / n : 0.0, out);
}

}  // namespace

void validate(const SynthHeadParams& p) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::invalid_argument, "synth params: " + msg); };
    if (p.seq_len < 1 || p.head_dim < 1) {
        fail("T and D must be at least 1");
    }
    if (p.n_clusters < 1 || p.n_clusters > p.seq_len) {
        fail("n_clusters must be in [1, T]");
    }
    if (p.hot_clusters > p.n_clusters) {
        fail("hot_clusters must not exceed n_clusters");
    }
    if (!(p.spread >= 0.0) || !std::isfinite(p.spread)) {
        fail("spread must be finite and non-negative");
    }
    if (p.query_spread && (!(*p.query_spread >= 0.0) || !std::isfinite(*p.query_spread))) {
        fail("query_spread must be finite and non-negative");
    }
    if (!(p.value_scale > 0.0) || !std::isfinite(p.value_scale)) {
        fail("value_scale must be positive");
    }
    if (!(p.query_sharpness > 0.0) || !std::isfinite(p.query_sharpness)) {
        fail("query_sharpness must be positive");
    }
    if (p.orthogonal_centers && p.n_clusters > p.head_dim) {
        fail("orthogonal centers need n_clusters <= D");
    }
    if (p.window_len < 1 || p.window_len >= p.seq_len) {
        fail("window_len must satisfy 1 <= window_len < T");
    }
    if (p.group_size < 1) {
        fail("group_size must be at least 1");
    }
}

std::pair<HeadKV, ObservationWindow> gen_head(const SynthHeadParams& p) {
    validate(p);
    const auto centers = draw_centers(p);
    const std::size_t t = p.seq_len;
    const std::size_t d = p.head_dim;

    // Balanced cluster sizes, shuffled over positions.
    std::vector<std::size_t> assignment(t);
    for (std::size_t i = 0; i < t; ++i) {
        assignment[i] = i % p.n_clusters;
    }
    Rng assign_rng(p.seed, assign_stream);
    for (std::size_t i = t; i > 1; --i) {
        std::swap(assignment[i - 1], assignment[assign_rng.below(i)]);
    }

    HeadKV head{Matrix(t, d), Matrix(t, d)};
    Rng key_rng(p.seed, keys_stream);
    std::vector<double> k(d);
    for (std::size_t i = 0; i < t; ++i) {
        const auto& c = centers[assignment[i]];
        for (std::size_t j = 0; j < d; ++j) {
            k[j] = c[j] + p.spread * key_rng.normal();
        }
        double n = norm(k);
        if (n <= 0.0) {
            k = c;
            n = 1.0;
        }
        scale_into(k, 1.0 / n, head.keys.row(i));
    }

    Rng value_rng(p.seed, values_stream);
    for (float& v : head.values.data()) {
        v = static_cast<float>(p.value_scale * value_rng.normal());
    }

    ObservationWindow window{Matrix(p.window_len * p.group_size, d), 0, 0};
    Rng window_rng(p.seed, window_stream);
    for (std::size_t r = 0; r < window.queries.rows(); ++r) {
        draw_query(window_rng, centers, p, window.queries.row(r));
    }
    return {std::move(head), std::move(window)};
}

Matrix gen_eval_queries(const SynthHeadParams& p, std::size_t n_queries, std::uint64_t eval_seed) {
    validate(p);
    if (n_queries < 1) {
        throw Error(ErrorCode::invalid_argument, "n_queries must be at least 1");
    }
    const auto centers = draw_centers(p);
    Matrix out(n_queries, p.head_dim);
    Rng rng(p.seed, eval_stream, eval_seed);
    for (std::size_t r = 0; r < n_queries; ++r) {
        draw_query(rng, centers, p, out.row(r));
    }
    return out;
}

std::uint64_t derive_head_seed(std::uint64_t base_seed, std::size_t layer, std::size_t head) {
    const std::uint64_t coord = (static_cast<std::uint64_t>(layer) << 32) ^ static_cast<std::uint64_t>(head);
    return splitmix64(base_seed ^ splitmix64(coord + 0x5851f42d4c957f2dULL));
}

SynthHeadParams head_params(const ParamGrid& grid, std::size_t layer, std::size_t head) {
    SynthHeadParams p = grid.at(layer).at(head);
    p.seed = derive_head_seed(p.seed, layer, head);
    return p;
}

GeneratedCache gen_cache(const ParamGrid& grid) {
    if (grid.empty() || grid.front().empty()) {
        throw Error(ErrorCode::invalid_argument, "generator grid is empty");
    }
    const auto& ref = grid.front().front();
    const std::size_t heads = grid.front().size();
    for (const auto& layer : grid) {
        if (layer.size() != heads) {
            throw Error(ErrorCode::dimension_mismatch, "every layer of the grid needs the same head count");
        }
        for (const auto& p : layer) {
            if (p.seq_len != ref.seq_len || p.head_dim != ref.head_dim || p.window_len != ref.window_len ||
                p.group_size != ref.group_size) {
                throw Error(ErrorCode::dimension_mismatch, "grid heads disagree on T, D, window_len or group_size");
            }
        }
    }

    GeneratedCache out;
    out.cache.window_len = ref.window_len;
    out.cache.layers.resize(grid.size());
    std::vector<ObservationWindow> windows;
    windows.reserve(grid.size() * heads);
    for (std::size_t l = 0; l < grid.size(); ++l) {
        out.cache.layers[l].layer_index = l;
        for (std::size_t h = 0; h < heads; ++h) {
            auto [kv, window] = gen_head(head_params(grid, l, h));
            window.layer_index = l;
            window.head_index = h;
            out.cache.layers[l].heads.push_back(std::move(kv));
            windows.push_back(std::move(window));
        }
    }
    out.windows = WindowSet(grid.size(), heads, std::move(windows));
    return out;
}

ParamGrid uniform_grid(const SynthHeadParams& params, std::size_t layers, std::size_t heads) {
    return ParamGrid(layers, std::vector<SynthHeadParams>(heads, params));
}

}  // namespace kvmix::synth
