// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// Compressed caches reuse the KVDUMP container. The manifest carries a
// "compressed" object (policy echo, lineage hash of the source dump, per-head
// retained counts, budgets and r_bar). The payload holds, per head in
// layer/head order, the retained keys then values (n_h x D float32 each),
// followed by the retained-index section: per head, n_h uint32 LE positions.

#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"
#include "kvmix/compression.hpp"
#include "kvmix/kvdump.hpp"

namespace kvmix {

struct LoadedCompressedDump {
    DumpManifest manifest;
    CompressedCache cache;  ///< scores_used and timings are not persisted
    std::string lineage;    ///< hex fingerprint of the source dump
};

std::uint64_t save_compressed_dump(const CompressedCache& compressed,
                                   const DumpManifest& source,
                                   std::uint64_t source_fingerprint,
                                   const std::filesystem::path& path);

LoadedCompressedDump load_compressed_dump(const std::filesystem::path& path);

nlohmann::json policy_to_json(const CompressionPolicy& policy);
CompressionPolicy policy_from_json(const nlohmann::json& j);

/// Per-head rows (layer, head, r_bar, budget, retained) plus the policy echo.
nlohmann::json compression_report(const CompressedCache& compressed);

}  // namespace kvmix
