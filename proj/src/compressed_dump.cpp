// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/compressed_dump.hpp"

namespace kvmix {

nlohmann::json policy_to_json(const CompressionPolicy& p) {
    nlohmann::json j;
    j["name"] = p.name();
    j["base"] = std::string(to_string(p.base));
    j["mix"] = p.mix;
    j["budget"] = p.budget;
    j["window_len"] = p.window_len;
    j["eps"] = p.eps;
    j["intrinsic"] = std::string(to_string(p.resolved_intrinsic()));
    j["pyramid_beta"] = p.pyramid_beta;
    j["adakv_floor_fraction"] = p.adakv_floor_fraction;
    j["mixed_allocation_mass"] = p.mixed_allocation_mass;
    j["fixed_r_bar"] = p.fixed_r_bar ? nlohmann::json(*p.fixed_r_bar) : nlohmann::json(nullptr);
    return j;
}

CompressionPolicy policy_from_json(const nlohmann::json& j) {
    try {
        CompressionPolicy p;
        p.base = parse_base_policy(j.at("base").get<std::string>());
        p.mix = j.at("mix").get<bool>();
        p.budget = j.at("budget").get<std::size_t>();
        p.window_len = j.at("window_len").get<std::size_t>();
        p.eps = j.at("eps").get<double>();
        const auto intrinsic = j.at("intrinsic").get<std::string>();
        p.intrinsic = intrinsic == "vnorm" ? IntrinsicKind::vnorm
                      : intrinsic == "knorm" ? IntrinsicKind::knorm
                                             : IntrinsicKind::none;
        p.pyramid_beta = j.at("pyramid_beta").get<double>();
        p.adakv_floor_fraction = j.at("adakv_floor_fraction").get<double>();
        p.mixed_allocation_mass = j.at("mixed_allocation_mass").get<bool>();
        if (!j.at("fixed_r_bar").is_null()) {
            p.fixed_r_bar = j.at("fixed_r_bar").get<std::vector<double>>();
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::corrupt_manifest, std::string("bad policy record: ") + e.what());
    }
}

std::uint64_t save_compressed_dump(const CompressedCache& c,
                                   const DumpManifest& source,
                                   std::uint64_t source_fingerprint,
                                   const std::filesystem::path& path) {
    DumpManifest m;
    m.layers = c.layers;
    m.heads = c.heads;
    m.seq_len = c.seq_len;
    m.head_dim = c.head_dim;
    m.window_len = c.window_len;
    m.window_rows = 0;
    m.seed = source.seed;
    m.labels = source.labels;

    nlohmann::json info;
    info["policy"] = policy_to_json(c.policy);
    info["lineage"] = hex64(source_fingerprint);
    std::vector<std::size_t> counts;
    std::vector<std::size_t> budgets;
    std::vector<double> r_bar;
    for (const auto& e : c.entries) {
        counts.push_back(e.retained.size());
        budgets.push_back(e.budget_effective);
        r_bar.push_back(e.r_bar);
    }
    info["retained"] = counts;
    info["budgets"] = budgets;
    info["r_bar"] = r_bar;
    m.compressed = info;

    std::vector<std::uint8_t> payload;
    for (const auto& e : c.entries) {
        append_f32le(payload, e.keys.data());
        append_f32le(payload, e.values.data());
    }
    for (const auto& e : c.entries) {
        for (std::size_t idx : e.retained) {
            append_u32le(payload, static_cast<std::uint32_t>(idx));
        }
    }
    return write_framed(path, m.to_json(), payload);
}

LoadedCompressedDump load_compressed_dump(const std::filesystem::path& path) {
    auto framed = read_framed(path);
    LoadedCompressedDump out;
    out.manifest = DumpManifest::from_json(framed.header);
    const auto& m = out.manifest;
    if (!m.compressed) {
        throw Error(ErrorCode::invalid_argument, path.string() + " is a full dump, not a compressed one");
    }
    const auto& info = *m.compressed;
    std::vector<std::size_t> counts;
    std::vector<std::size_t> budgets;
    std::vector<double> r_bar;
    try {
        out.lineage = info.at("lineage").get<std::string>();
        counts = info.at("retained").get<std::vector<std::size_t>>();
        budgets = info.at("budgets").get<std::vector<std::size_t>>();
        r_bar = info.at("r_bar").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::corrupt_manifest, std::string("bad compressed section: ") + e.what());
    }
    const std::size_t n = m.layers * m.heads;
    if (counts.size() != n || budgets.size() != n || r_bar.size() != n) {
        throw Error(ErrorCode::corrupt_manifest, "compressed section needs one entry per head");
    }
    std::uint64_t expected = 0;
    for (std::size_t c : counts) {
        if (c == 0 || c > m.seq_len) {
            throw Error(ErrorCode::corrupt_manifest, "retained count out of range");
        }
        expected += static_cast<std::uint64_t>(c) * (2 * m.head_dim * 4 + 4);
    }
    if (framed.payload.size() != expected) {
        throw Error(ErrorCode::length_mismatch,
                    "payload is " + std::to_string(framed.payload.size()) + " bytes, manifest declares " +
                        std::to_string(expected));
    }

    auto& c = out.cache;
    c.layers = m.layers;
    c.heads = m.heads;
    c.seq_len = m.seq_len;
    c.head_dim = m.head_dim;
    c.window_len = m.window_len;
    c.policy = policy_from_json(info.at("policy"));
    c.entries.resize(n);
    PayloadReader reader(framed.payload);
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = c.entries[i];
        e.keys = Matrix(counts[i], m.head_dim);
        e.values = Matrix(counts[i], m.head_dim);
        reader.read_f32(e.keys.data());
        reader.read_f32(e.values.data());
        e.budget_effective = budgets[i];
        e.r_bar = r_bar[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& e = c.entries[i];
        e.retained.resize(counts[i]);
        for (std::size_t k = 0; k < counts[i]; ++k) {
            e.retained[k] = reader.read_u32();
            if (e.retained[k] >= m.seq_len || (k > 0 && e.retained[k] <= e.retained[k - 1])) {
                throw Error(ErrorCode::corrupt_manifest, "retained indices must be ascending and below T");
            }
        }
    }
    return out;
}

nlohmann::json compression_report(const CompressedCache& c) {
    nlohmann::json j;
    j["policy"] = policy_to_json(c.policy);
    j["L"] = c.layers;
    j["H"] = c.heads;
    j["T"] = c.seq_len;
    j["total_retained"] = c.total_retained();
    j["compression_ratio"] = c.compression_ratio();
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t l = 0; l < c.layers; ++l) {
        for (std::size_t h = 0; h < c.heads; ++h) {
            const auto& e = c.at(l, h);
            rows.push_back({{"layer", l},
                            {"head", h},
                            {"r_bar", e.r_bar},
                            {"budget", e.budget_effective},
                            {"retained", e.retained.size()}});
        }
    }
    j["heads"] = rows;
    return j;
}

}  // namespace kvmix
