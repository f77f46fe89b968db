// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment configuration and the batch commands behind the `kvmix` CLI.
//
// Configs are JSON documents:
//
//   {
//     "generator": {
//       "layers": 2, "heads": 4,
//       "head": {"T": 1024, "D": 64, "n_clusters": 4, "spread": 0.1,
//                "value_scale": 1.0, "hot_clusters": 1, "query_sharpness": 32,
//                "query_spread": 0.1, "orthogonal_centers": false,
//                "window_len": 32, "group_size": 1},
//       "overrides": [{"layer": 0, "head": 1, "spread": 0.8}]
//     },
//     "policies": ["snapkv", "adakv"],   // bases
//     "mix": [false, true],
//     "budgets": [64, 128, 256],
//     "seeds": [0, 1, 2],                // or {"first": 0, "count": 50}
//     "eval_queries": 16, "eval_seed": 0,
//     "output_dir": "kvmix_out", "workers": 1, "eps": 1e-6,
//     "pyramid_beta": 0.5, "adakv_floor_fraction": 0.5,
//     "mixed_allocation_mass": false, "intrinsic": "vnorm"
//   }
//
// Every key is optional; unknown keys are rejected.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kvmix/compression.hpp"
#include "kvmix/evaluation.hpp"
#include "kvmix/kvdump.hpp"
#include "kvmix/synth.hpp"

namespace kvmix::experiment {

struct HeadOverride {
    std::size_t layer = 0;
    std::size_t head = 0;
    nlohmann::json fields;  ///< subset of the "head" keys
};

struct GeneratorConfig {
    std::size_t layers = 2;
    std::size_t heads = 4;
    synth::SynthHeadParams head;
    std::vector<HeadOverride> overrides;

    /// Per-head params for one base seed (per-head seeds are derived by gen_cache).
    synth::ParamGrid grid(std::uint64_t seed) const;
    nlohmann::json to_json() const;
    static GeneratorConfig from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
    GeneratorConfig generator;
    std::vector<BasePolicy> policies{BasePolicy::snapkv};
    std::vector<bool> mix_modes{false, true};
    std::vector<std::size_t> budgets{64, 128, 256};
    std::vector<std::uint64_t> seeds{0};
    std::size_t eval_queries = 16;
    std::uint64_t eval_seed = 0;
    std::filesystem::path output_dir = "kvmix_out";
    std::size_t workers = 1;
    double eps = kDefaultEps;
    double pyramid_beta = 0.5;
    double adakv_floor_fraction = 0.5;
    bool mixed_allocation_mass = false;
    std::optional<IntrinsicKind> intrinsic;

    CompressionPolicy make_policy(BasePolicy base, bool mix, std::size_t budget) const;
    void validate() const;
};

/// Throws ErrorCode::invalid_config on malformed or unknown keys.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Rebuilds the generator grid from the labels cmd_generate stores; nullopt
/// for dumps that did not come from the generator.
std::optional<synth::ParamGrid> grid_from_manifest(const DumpManifest& manifest);

/// Eval queries for every head of a dump, layer-major. Synthetic dumps reuse
/// the generator recipe on an independent stream; others fall back to random
/// directions of norm sqrt(D).
std::vector<Matrix> eval_queries_for(const DumpManifest& manifest,
                                     const KVCache& cache,
                                     std::size_t n_queries,
                                     std::uint64_t eval_seed);

std::string format_double(double v);

// generate ---------------------------------------------------------------

/// One dump per seed, named cache_seed<seed>.kvdump in output_dir.
std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config);

// compress ---------------------------------------------------------------

struct CompressOptions {
    std::filesystem::path dump;
    CompressionPolicy policy;  ///< window_len is taken from the dump
    std::filesystem::path output;
    std::filesystem::path report;  ///< empty: <output>.report.json
    std::optional<std::filesystem::path> r_bar_table;
    std::size_t workers = 1;
};

struct CompressOutcome {
    std::filesystem::path output;
    std::filesystem::path report;
    nlohmann::json report_json;
};

CompressOutcome cmd_compress(const CompressOptions& options);

/// Reads "layer,head,r_bar[,...]" rows (the redundancy-report format).
std::vector<double> read_r_bar_table(const std::filesystem::path& path, std::size_t layers, std::size_t heads);

// eval -------------------------------------------------------------------

/// Column order of metric rows written by eval.
inline constexpr const char* kEvalHeader =
    "policy,mix,budget,seed,layer,head,r_bar,fidelity_l2,fidelity_cos,coverage_gap,memory_ratio,"
    "t_scoring_us,t_diversity_us,t_redundancy_us,t_selection_us,run_id";

struct EvalOptions {
    std::filesystem::path original;
    std::filesystem::path compressed;
    std::uint64_t eval_seed = 0;
    std::size_t eval_queries = 16;
    std::filesystem::path output;
};

struct EvalOutcome {
    std::string run_id;
    std::size_t rows_written = 0;  ///< 0 when the run id was already present
    EvalReport report;
};

EvalOutcome cmd_eval(const EvalOptions& options);

// compare ----------------------------------------------------------------

inline constexpr const char* kCompareRowsHeader =
    "policy,mix,budget,seed,layer,head,r_bar,fidelity_l2,fidelity_cos,coverage_gap,memory_ratio";
inline constexpr const char* kCompareTimingsHeader =
    "policy,mix,budget,seed,layer,head,t_scoring_us,t_diversity_us,t_redundancy_us,t_selection_us";
inline constexpr const char* kCompareSummaryHeader =
    "policy,budget,seeds,fidelity_l2_base,fidelity_l2_mix,fidelity_cos_base,fidelity_cos_mix,"
    "coverage_gap_base,coverage_gap_mix,memory_ratio_base,memory_ratio_mix,win_rate_fidelity,win_rate_coverage";

struct CompareOutcome {
    std::string rows_csv;
    std::string summary_csv;
    std::string timings_csv;
    std::filesystem::path rows_path;
    std::filesystem::path summary_path;
    std::filesystem::path timings_path;
};

/// Full policy x mix x budget x seed grid on in-memory synthetic caches.
/// Seeds are distributed over `config.workers` threads; the row and summary
/// tables do not depend on the worker count. Timings go to a separate file.
CompareOutcome cmd_compare(const ExperimentConfig& config, bool write_files = true);

// redundancy-report ------------------------------------------------------

inline constexpr const char* kRedundancyHeader = "layer,head,r_bar,raw";

std::string cmd_redundancy_report(const std::filesystem::path& dump, bool naive = false);

// bench ------------------------------------------------------------------

inline constexpr const char* kBenchHeader =
    "T,policy,mode,repetitions,scoring_us,diversity_us,redundancy_us,selection_us,total_us,mixing_overhead";

/// Stage timings for each requested T (synthetic caches from the config
/// generator) with mixing off and on.
std::string cmd_bench(const ExperimentConfig& config,
                      BasePolicy base,
                      std::size_t budget,
                      const std::vector<std::size_t>& seq_lens,
                      std::size_t repetitions);

}  // namespace kvmix::experiment
