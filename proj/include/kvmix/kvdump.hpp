// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// KVDUMP container: a text line "KVDUMP <n>\n", an n-byte JSON manifest, then
// the raw little-endian float32 payload. Full-cache payloads are laid out
// layer-major, head-major; each head stores keys (T x D, row-major) then
// values (T x D). Embedded observation windows follow in the same layer/head
// order, W_eff x D each.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kvmix/cache_model.hpp"

namespace kvmix {

inline constexpr int kDumpVersion = 1;
inline constexpr std::string_view kDumpDtype = "f32le";
inline constexpr std::string_view kDumpMagic = "KVDUMP";

struct DumpManifest {
    int version = kDumpVersion;
    std::size_t layers = 0;
    std::size_t heads = 0;
    std::size_t seq_len = 0;
    std::size_t head_dim = 0;
    std::size_t window_len = 0;
    std::size_t window_rows = 0;  ///< W_eff; zero when no windows are embedded.
    std::string dtype = std::string(kDumpDtype);
    std::optional<std::uint64_t> seed;
    nlohmann::json labels = nlohmann::json::object();
    /// Present only for compressed dumps (see compression.hpp).
    std::optional<nlohmann::json> compressed;

    /// Payload bytes of a full (uncompressed) dump described by this manifest.
    std::uint64_t full_payload_bytes() const;

    nlohmann::json to_json() const;
    static DumpManifest from_json(const nlohmann::json& j);
};

struct LoadedDump {
    DumpManifest manifest;
    KVCache cache;
    std::optional<WindowSet> windows;
    ValidationReport report;  ///< Non-finite entries found while loading.
};

/// Writes a full dump. Refuses caches (or windows) that fail validation.
/// Returns the number of bytes written.
std::uint64_t save_dump(const KVCache& cache,
                        const std::optional<WindowSet>& windows,
                        const std::filesystem::path& path,
                        std::optional<std::uint64_t> seed = std::nullopt,
                        const nlohmann::json& labels = nlohmann::json::object());

LoadedDump load_dump(const std::filesystem::path& path);

// Framing primitives shared with the compressed-dump writer.

struct FramedFile {
    nlohmann::json header;
    std::vector<std::uint8_t> payload;
};

std::uint64_t write_framed(const std::filesystem::path& path,
                           const nlohmann::json& header,
                           std::span<const std::uint8_t> payload);
FramedFile read_framed(const std::filesystem::path& path);

void append_f32le(std::vector<std::uint8_t>& out, std::span<const float> values);
void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t value);

/// Little-endian reader over a payload; throws length_mismatch on overrun.
class PayloadReader {
public:
    explicit PayloadReader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

    void read_f32(std::span<float> out);
    std::uint32_t read_u32();
    std::size_t remaining() const noexcept {
        return m_bytes.size() - m_offset;
    }

private:
    std::span<const std::uint8_t> m_bytes;
    std::size_t m_offset = 0;
};

/// FNV-1a 64-bit over raw bytes; used for dump lineage checks.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t file_fingerprint(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

}  // namespace kvmix
