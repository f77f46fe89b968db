// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/kvdump.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace kvmix {

namespace {

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out = 0;
    if (__builtin_mul_overflow(a, b, &out)) {
        throw Error(ErrorCode::corrupt_manifest, "manifest dimensions overflow");
    }
    return out;
}

std::size_t require_size(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_number_unsigned()) {
        throw Error(ErrorCode::corrupt_manifest, std::string("manifest key '") + key + "' missing or not a non-negative integer");
    }
    return j.at(key).get<std::size_t>();
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::uint64_t DumpManifest::full_payload_bytes() const {
    const std::uint64_t heads_total = checked_mul(layers, heads);
    const std::uint64_t kv = checked_mul(checked_mul(checked_mul(heads_total, 2), seq_len), checked_mul(head_dim, 4));
    const std::uint64_t win = checked_mul(checked_mul(heads_total, window_rows), checked_mul(head_dim, 4));
    if (kv > std::numeric_limits<std::uint64_t>::max() - win) {
        throw Error(ErrorCode::corrupt_manifest, "manifest dimensions overflow");
    }
    return kv + win;
}

nlohmann::json DumpManifest::to_json() const {
    nlohmann::json j;
    j["version"] = version;
    j["L"] = layers;
    j["H"] = heads;
    j["T"] = seq_len;
    j["D"] = head_dim;
    j["window_len"] = window_len;
    j["W_eff"] = window_rows;
    j["dtype"] = dtype;
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
    j["labels"] = labels;
    if (compressed) {
        j["compressed"] = *compressed;
    }
    return j;
}

DumpManifest DumpManifest::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw Error(ErrorCode::corrupt_manifest, "manifest is not a JSON object");
    }
    DumpManifest m;
    if (!j.contains("version") || !j.at("version").is_number_integer()) {
        throw Error(ErrorCode::corrupt_manifest, "manifest key 'version' missing");
    }
    m.version = j.at("version").get<int>();
    if (m.version != kDumpVersion) {
        throw Error(ErrorCode::corrupt_manifest, "unsupported manifest version " + std::to_string(m.version));
    }
    if (!j.contains("dtype") || !j.at("dtype").is_string()) {
        throw Error(ErrorCode::corrupt_manifest, "manifest key 'dtype' missing");
    }
    m.dtype = j.at("dtype").get<std::string>();
    if (m.dtype != kDumpDtype) {
        throw Error(ErrorCode::unsupported_dtype, "unsupported dtype '" + m.dtype + "', expected f32le");
    }
    m.layers = require_size(j, "L");
    m.heads = require_size(j, "H");
    m.seq_len = require_size(j, "T");
    m.head_dim = require_size(j, "D");
    m.window_len = require_size(j, "window_len");
    m.window_rows = require_size(j, "W_eff");
    if (j.contains("seed") && !j.at("seed").is_null()) {
        if (!j.at("seed").is_number_unsigned()) {
            throw Error(ErrorCode::corrupt_manifest, "manifest key 'seed' must be a non-negative integer");
        }
        m.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("labels")) {
        m.labels = j.at("labels");
    }
    if (j.contains("compressed")) {
        m.compressed = j.at("compressed");
    }
    if (m.layers == 0 || m.heads == 0 || m.seq_len == 0 || m.head_dim == 0) {
        throw Error(ErrorCode::corrupt_manifest, "manifest dimensions must be at least 1");
    }
    if (m.window_len >= m.seq_len) {
        throw Error(ErrorCode::corrupt_manifest, "manifest window_len must be smaller than T");
    }
    return m;
}

void append_f32le(std::vector<std::uint8_t>& out, std::span<const float> values) {
    const std::size_t base = out.size();
    out.resize(base + values.size() * 4);
    std::uint8_t* dst = out.data() + base;
    for (float f : values) {
        const auto bits = std::bit_cast<std::uint32_t>(f);
        dst[0] = static_cast<std::uint8_t>(bits);
        dst[1] = static_cast<std::uint8_t>(bits >> 8);
        dst[2] = static_cast<std::uint8_t>(bits >> 16);
        dst[3] = static_cast<std::uint8_t>(bits >> 24);
        dst += 4;
    }
}

void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t value) {
    out.push_back(static_cast<std::uint8_t>(value));
    out.push_back(static_cast<std::uint8_t>(value >> 8));
    out.push_back(static_cast<std::uint8_t>(value >> 16));
    out.push_back(static_cast<std::uint8_t>(value >> 24));
}

void PayloadReader::read_f32(std::span<float> out) {
    if (remaining() < out.size() * 4) {
        throw Error(ErrorCode::length_mismatch, "payload shorter than manifest declares");
    }
    const std::uint8_t* src = m_bytes.data() + m_offset;
    for (float& f : out) {
        const std::uint32_t bits = static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
                                   (static_cast<std::uint32_t>(src[2]) << 16) |
                                   (static_cast<std::uint32_t>(src[3]) << 24);
        f = std::bit_cast<float>(bits);
        src += 4;
    }
    m_offset += out.size() * 4;
}

std::uint32_t PayloadReader::read_u32() {
    if (remaining() < 4) {
        throw Error(ErrorCode::length_mismatch, "payload shorter than manifest declares");
    }
    const std::uint8_t* src = m_bytes.data() + m_offset;
    m_offset += 4;
    return static_cast<std::uint32_t>(src[0]) | (static_cast<std::uint32_t>(src[1]) << 8) |
           (static_cast<std::uint32_t>(src[2]) << 16) | (static_cast<std::uint32_t>(src[3]) << 24);
}

std::uint64_t write_framed(const std::filesystem::path& path,
                           const nlohmann::json& header,
                           std::span<const std::uint8_t> payload) {
    const std::string text = header.dump();
    const std::string prefix = std::string(kDumpMagic) + " " + std::to_string(text.size()) + "\n";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    }
    out.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    out.flush();
    if (!out) {
        throw Error(ErrorCode::io_error, "write failed for " + path.string());
    }
    return prefix.size() + text.size() + payload.size();
}

FramedFile read_framed(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    const std::size_t magic_len = kDumpMagic.size();
    if (bytes.size() < magic_len + 3 || std::memcmp(bytes.data(), kDumpMagic.data(), magic_len) != 0 ||
        bytes[magic_len] != ' ') {
        throw Error(ErrorCode::corrupt_manifest, path.string() + " is not a KVDUMP file");
    }
    const char* first = reinterpret_cast<const char*>(bytes.data()) + magic_len + 1;
    const char* end = reinterpret_cast<const char*>(bytes.data()) + std::min<std::size_t>(bytes.size(), 64);
    std::uint64_t header_len = 0;
    auto [ptr, ec] = std::from_chars(first, end, header_len);
    if (ec != std::errc() || ptr == first || ptr == end || *ptr != '\n') {
        throw Error(ErrorCode::corrupt_manifest, "malformed KVDUMP header length line");
    }
    const std::size_t header_begin = static_cast<std::size_t>(ptr - reinterpret_cast<const char*>(bytes.data())) + 1;
    if (header_len > bytes.size() - header_begin) {
        throw Error(ErrorCode::corrupt_manifest, "manifest runs past end of file");
    }
    FramedFile out;
    try {
        out.header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_begin),
                                           bytes.begin() + static_cast<std::ptrdiff_t>(header_begin + header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::corrupt_manifest, std::string("manifest is not valid JSON: ") + e.what());
    }
    out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header_begin + header_len), bytes.end());
    return out;
}

std::uint64_t save_dump(const KVCache& cache,
                        const std::optional<WindowSet>& windows,
                        const std::filesystem::path& path,
                        std::optional<std::uint64_t> seed,
                        const nlohmann::json& labels) {
    auto report = validate_cache(cache);
    if (windows) {
        auto wr = validate_windows(cache, *windows);
        report.insert(report.end(), wr.begin(), wr.end());
    }
    if (!report.empty()) {
        throw Error(ErrorCode::invalid_cache, "refusing to write invalid cache: " + describe(report.front()));
    }

    DumpManifest m;
    m.layers = cache.num_layers();
    m.heads = cache.num_heads();
    m.seq_len = cache.seq_len();
    m.head_dim = cache.head_dim();
    m.window_len = cache.window_len;
    m.window_rows = windows ? windows->effective_rows() : 0;
    m.seed = seed;
    m.labels = labels.is_null() ? nlohmann::json::object() : labels;

    std::vector<std::uint8_t> payload;
    payload.reserve(m.full_payload_bytes());
    for (const auto& layer : cache.layers) {
        for (const auto& head : layer.heads) {
            append_f32le(payload, head.keys.data());
            append_f32le(payload, head.values.data());
        }
    }
    if (windows) {
        for (const auto& w : windows->all()) {
            append_f32le(payload, w.queries.data());
        }
    }
    return write_framed(path, m.to_json(), payload);
}

LoadedDump load_dump(const std::filesystem::path& path) {
    auto framed = read_framed(path);
    LoadedDump out;
    out.manifest = DumpManifest::from_json(framed.header);
    const auto& m = out.manifest;
    if (m.compressed) {
        throw Error(ErrorCode::invalid_argument, path.string() + " holds a compressed cache, not a full dump");
    }
    const std::uint64_t expected = m.full_payload_bytes();
    if (framed.payload.size() != expected) {
        throw Error(ErrorCode::length_mismatch,
                    "payload is " + std::to_string(framed.payload.size()) + " bytes, manifest declares " +
                        std::to_string(expected));
    }

    PayloadReader reader(framed.payload);
    out.cache.window_len = m.window_len;
    out.cache.layers.resize(m.layers);
    for (std::size_t l = 0; l < m.layers; ++l) {
        auto& layer = out.cache.layers[l];
        layer.layer_index = l;
        layer.heads.resize(m.heads);
        for (auto& head : layer.heads) {
            head.keys = Matrix(m.seq_len, m.head_dim);
            head.values = Matrix(m.seq_len, m.head_dim);
            reader.read_f32(head.keys.data());
            reader.read_f32(head.values.data());
        }
    }
    if (m.window_rows > 0) {
        std::vector<ObservationWindow> windows;
        windows.reserve(m.layers * m.heads);
        for (std::size_t l = 0; l < m.layers; ++l) {
            for (std::size_t h = 0; h < m.heads; ++h) {
                ObservationWindow w{Matrix(m.window_rows, m.head_dim), l, h};
                reader.read_f32(w.queries.data());
                windows.push_back(std::move(w));
            }
        }
        out.windows = WindowSet(m.layers, m.heads, std::move(windows));
    }

    out.report = validate_cache(out.cache);
    if (out.windows) {
        auto wr = validate_windows(out.cache, *out.windows);
        out.report.insert(out.report.end(), wr.begin(), wr.end());
    }
    return out;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    return fnv1a64(bytes);
}

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

}  // namespace kvmix
