// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "kvmix/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "kvmix/compressed_dump.hpp"
#include "kvmix/parallel.hpp"

namespace kvmix::experiment {

namespace {

[[noreturn]] void config_error(const std::string& msg) {
    throw Error(ErrorCode::invalid_config, msg);
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        config_error("config key '" + key + "' has the wrong type");
    }
}

std::size_t get_size(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number_unsigned()) {
        config_error("config key '" + key + "' must be a non-negative integer");
    }
    return j.get<std::size_t>();
}

void apply_head_fields(synth::SynthHeadParams& p, const nlohmann::json& fields) {
    if (!fields.is_object()) {
        config_error("generator head settings must be an object");
    }
    for (const auto& [key, value] : fields.items()) {
        if (key == "T") {
            p.seq_len = get_size(value, key);
        } else if (key == "D") {
            p.head_dim = get_size(value, key);
        } else if (key == "n_clusters") {
            p.n_clusters = get_size(value, key);
        } else if (key == "spread") {
            p.spread = get_as<double>(value, key);
        } else if (key == "value_scale") {
            p.value_scale = get_as<double>(value, key);
        } else if (key == "hot_clusters") {
            p.hot_clusters = get_size(value, key);
        } else if (key == "query_sharpness") {
            p.query_sharpness = get_as<double>(value, key);
        } else if (key == "query_spread") {
            if (value.is_null()) {
                p.query_spread.reset();
            } else {
                p.query_spread = get_as<double>(value, key);
            }
        } else if (key == "orthogonal_centers") {
            p.orthogonal_centers = get_as<bool>(value, key);
        } else if (key == "window_len") {
            p.window_len = get_size(value, key);
        } else if (key == "group_size") {
            p.group_size = get_size(value, key);
        } else if (key != "layer" && key != "head") {
            config_error("unknown generator head key '" + key + "'");
        }
    }
}

nlohmann::json head_to_json(const synth::SynthHeadParams& p) {
    return {{"T", p.seq_len},
            {"D", p.head_dim},
            {"n_clusters", p.n_clusters},
            {"spread", p.spread},
            {"value_scale", p.value_scale},
            {"hot_clusters", p.hot_clusters},
            {"query_sharpness", p.query_sharpness},
            {"query_spread", p.query_spread ? nlohmann::json(*p.query_spread) : nlohmann::json(nullptr)},
            {"orthogonal_centers", p.orthogonal_centers},
            {"window_len", p.window_len},
            {"group_size", p.group_size}};
}

IntrinsicKind parse_intrinsic(const std::string& s) {
    if (s == "none") {
        return IntrinsicKind::none;
    }
    if (s == "knorm") {
        return IntrinsicKind::knorm;
    }
    if (s == "vnorm") {
        return IntrinsicKind::vnorm;
    }
    config_error("intrinsic must be one of none, knorm, vnorm");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text, bool append = false) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::io_error, "cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw Error(ErrorCode::io_error, "write failed for " + path.string());
    }
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, sep)) {
        out.push_back(field);
    }
    return out;
}

std::string seed_field(const DumpManifest& m) {
    return m.seed ? std::to_string(*m.seed) : "NA";
}

std::vector<Matrix> grid_eval_queries(const synth::ParamGrid& grid, std::size_t n, std::uint64_t eval_seed) {
    std::vector<Matrix> out;
    for (std::size_t l = 0; l < grid.size(); ++l) {
        for (std::size_t h = 0; h < grid[l].size(); ++h) {
            out.push_back(synth::gen_eval_queries(synth::head_params(grid, l, h), n, eval_seed));
        }
    }
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// config -------------------------------------------------------------------

synth::ParamGrid GeneratorConfig::grid(std::uint64_t seed) const {
    synth::SynthHeadParams base = head;
    base.seed = seed;
    auto g = synth::uniform_grid(base, layers, heads);
    for (const auto& o : overrides) {
        if (o.layer >= layers || o.head >= heads) {
            config_error("generator override targets a head outside the grid");
        }
        apply_head_fields(g[o.layer][o.head], o.fields);
    }
    return g;
}

nlohmann::json GeneratorConfig::to_json() const {
    nlohmann::json j;
    j["layers"] = layers;
    j["heads"] = heads;
    j["head"] = head_to_json(head);
    nlohmann::json ov = nlohmann::json::array();
    for (const auto& o : overrides) {
        nlohmann::json f = o.fields;
        f["layer"] = o.layer;
        f["head"] = o.head;
        ov.push_back(f);
    }
    j["overrides"] = ov;
    return j;
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        config_error("'generator' must be an object");
    }
    GeneratorConfig g;
    for (const auto& [key, value] : j.items()) {
        if (key == "layers") {
            g.layers = get_size(value, key);
        } else if (key == "heads") {
            g.heads = get_size(value, key);
        } else if (key == "head") {
            apply_head_fields(g.head, value);
        } else if (key == "overrides") {
            if (!value.is_array()) {
                config_error("'overrides' must be an array");
            }
            for (const auto& item : value) {
                if (!item.is_object() || !item.contains("layer") || !item.contains("head")) {
                    config_error("each override needs 'layer' and 'head'");
                }
                HeadOverride o;
                o.layer = get_size(item.at("layer"), "layer");
                o.head = get_size(item.at("head"), "head");
                o.fields = item;
                o.fields.erase("layer");
                o.fields.erase("head");
                synth::SynthHeadParams probe;
                apply_head_fields(probe, o.fields);  // rejects unknown keys early
                g.overrides.push_back(std::move(o));
            }
        } else {
            config_error("unknown generator key '" + key + "'");
        }
    }
    if (g.layers < 1 || g.heads < 1) {
        config_error("generator needs at least one layer and one head");
    }
    return g;
}

CompressionPolicy ExperimentConfig::make_policy(BasePolicy base, bool mix, std::size_t budget) const {
    CompressionPolicy p;
    p.base = base;
    p.mix = mix;
    p.budget = budget;
    p.window_len = generator.head.window_len;
    p.eps = eps;
    p.intrinsic = intrinsic;
    p.pyramid_beta = pyramid_beta;
    p.adakv_floor_fraction = adakv_floor_fraction;
    p.mixed_allocation_mass = mixed_allocation_mass;
    return p;
}

void ExperimentConfig::validate() const {
    if (policies.empty()) {
        config_error("policy list is empty");
    }
    if (mix_modes.empty()) {
        config_error("mix list is empty");
    }
    if (budgets.empty()) {
        config_error("budget list is empty");
    }
    for (auto b : budgets) {
        if (b < 1) {
            config_error("budgets must be at least 1");
        }
    }
    if (seeds.empty()) {
        config_error("seed list is empty");
    }
    if (eval_queries < 1) {
        config_error("eval_queries must be at least 1");
    }
    if (workers < 1) {
        config_error("workers must be at least 1");
    }
    try {
        for (const auto& row : generator.grid(0)) {
            for (const auto& p : row) {
                synth::validate(p);
            }
        }
        kvmix::validate(make_policy(policies.front(), false, budgets.front()));
    } catch (const Error& e) {
        config_error(e.what());
    }
}

ExperimentConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) {
        config_error("config must be a JSON object");
    }
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "generator") {
            c.generator = GeneratorConfig::from_json(value);
        } else if (key == "policies") {
            c.policies.clear();
            for (const auto& p : get_as<std::vector<std::string>>(value, key)) {
                c.policies.push_back(parse_base_policy(p));
            }
        } else if (key == "mix") {
            c.mix_modes = get_as<std::vector<bool>>(value, key);
        } else if (key == "budgets") {
            c.budgets.clear();
            if (!value.is_array()) {
                config_error("'budgets' must be an array");
            }
            for (const auto& b : value) {
                c.budgets.push_back(get_size(b, key));
            }
        } else if (key == "seeds") {
            c.seeds.clear();
            if (value.is_array()) {
                for (const auto& s : value) {
                    c.seeds.push_back(get_size(s, key));
                }
            } else if (value.is_object() && value.contains("first") && value.contains("count")) {
                const auto first = get_size(value.at("first"), "seeds.first");
                const auto count = get_size(value.at("count"), "seeds.count");
                for (std::size_t i = 0; i < count; ++i) {
                    c.seeds.push_back(first + i);
                }
            } else {
                config_error("'seeds' must be an array or {\"first\", \"count\"}");
            }
        } else if (key == "eval_queries") {
            c.eval_queries = get_size(value, key);
        } else if (key == "eval_seed") {
            c.eval_seed = get_size(value, key);
        } else if (key == "output_dir") {
            c.output_dir = get_as<std::string>(value, key);
        } else if (key == "workers") {
            c.workers = get_size(value, key);
        } else if (key == "eps") {
            c.eps = get_as<double>(value, key);
        } else if (key == "pyramid_beta") {
            c.pyramid_beta = get_as<double>(value, key);
        } else if (key == "adakv_floor_fraction") {
            c.adakv_floor_fraction = get_as<double>(value, key);
        } else if (key == "mixed_allocation_mass") {
            c.mixed_allocation_mass = get_as<bool>(value, key);
        } else if (key == "intrinsic") {
            c.intrinsic = parse_intrinsic(get_as<std::string>(value, key));
        } else {
            config_error("unknown config key '" + key + "'");
        }
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        config_error(path.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

std::optional<synth::ParamGrid> grid_from_manifest(const DumpManifest& m) {
    if (!m.seed || !m.labels.is_object() || !m.labels.contains("generator")) {
        return std::nullopt;
    }
    const auto gen = GeneratorConfig::from_json(m.labels.at("generator"));
    auto grid = gen.grid(*m.seed);
    if (grid.size() != m.layers || grid.front().size() != m.heads || grid.front().front().seq_len != m.seq_len ||
        grid.front().front().head_dim != m.head_dim) {
        throw Error(ErrorCode::corrupt_manifest, "generator labels disagree with manifest dimensions");
    }
    return grid;
}

std::vector<Matrix> eval_queries_for(const DumpManifest& manifest,
                                     const KVCache& cache,
                                     std::size_t n_queries,
                                     std::uint64_t eval_seed) {
    if (n_queries < 1) {
        throw Error(ErrorCode::invalid_argument, "eval query count must be at least 1");
    }
    if (auto grid = grid_from_manifest(manifest)) {
        return grid_eval_queries(*grid, n_queries, eval_seed);
    }
    const std::size_t d = cache.head_dim();
    std::mt19937_64 rng(eval_seed ^ 0x6a09e667f3bcc909ULL);
    std::normal_distribution<double> gauss;
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < cache.num_layers() * cache.num_heads(); ++i) {
        Matrix q(n_queries, d);
        for (std::size_t r = 0; r < n_queries; ++r) {
            std::vector<double> v(d);
            double n = 0.0;
            for (double& x : v) {
                x = gauss(rng);
                n += x * x;
            }
            const double scale = std::sqrt(static_cast<double>(d)) / std::sqrt(n);
            for (std::size_t c = 0; c < d; ++c) {
                q(r, c) = static_cast<float>(v[c] * scale);
            }
        }
        out.push_back(std::move(q));
    }
    return out;
}

// generate -----------------------------------------------------------------

std::vector<std::filesystem::path> cmd_generate(const ExperimentConfig& config) {
    config.validate();
    std::filesystem::create_directories(config.output_dir);
    std::vector<std::filesystem::path> paths;
    for (auto seed : config.seeds) {
        const auto generated = synth::gen_cache(config.generator.grid(seed));
        const auto path = config.output_dir / ("cache_seed" + std::to_string(seed) + ".kvdump");
        nlohmann::json labels{{"source", "synthetic"}, {"generator", config.generator.to_json()}};
        save_dump(generated.cache, generated.windows, path, seed, labels);
        paths.push_back(path);
    }
    return paths;
}

// compress -----------------------------------------------------------------

std::vector<double> read_r_bar_table(const std::filesystem::path& path, std::size_t layers, std::size_t heads) {
    std::istringstream in(read_text(path));
    std::vector<double> table(layers * heads, 0.0);
    std::vector<char> seen(layers * heads, 0);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.rfind("layer", 0) == 0) {
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() < 3) {
            config_error("r_bar table rows need layer,head,r_bar");
        }
        std::size_t l = 0;
        std::size_t h = 0;
        double r = 0.0;
        try {
            l = std::stoul(fields[0]);
            h = std::stoul(fields[1]);
            r = std::stod(fields[2]);
        } catch (const std::exception&) {
            config_error("unparsable r_bar table row '" + line + "'");
        }
        if (l >= layers || h >= heads || !(r >= 0.0 && r <= 1.0)) {
            config_error("r_bar table row out of range: '" + line + "'");
        }
        table[l * heads + h] = r;
        seen[l * heads + h] = 1;
    }
    for (char s : seen) {
        if (!s) {
            config_error("r_bar table must cover every head");
        }
    }
    return table;
}

CompressOutcome cmd_compress(const CompressOptions& options) {
    const auto dump = load_dump(options.dump);
    if (!dump.report.empty()) {
        throw Error(ErrorCode::invalid_cache, "dump failed validation: " + describe(dump.report.front()));
    }
    CompressionPolicy policy = options.policy;
    policy.window_len = dump.manifest.window_len;
    if (options.r_bar_table) {
        policy.fixed_r_bar = read_r_bar_table(*options.r_bar_table, dump.manifest.layers, dump.manifest.heads);
    }
    if (policy.needs_windows() && !dump.windows) {
        throw Error(ErrorCode::missing_windows,
                    "policy " + policy.name() + " needs observation windows but " + options.dump.string() +
                        " has none embedded");
    }
    const WindowSet* windows = dump.windows ? &*dump.windows : nullptr;
    const auto compressed = compress_cache(dump.cache, windows, policy, options.workers);

    CompressOutcome out;
    out.output = options.output;
    out.report = options.report.empty() ? std::filesystem::path(options.output.string() + ".report.json")
                                        : options.report;
    if (out.output.has_parent_path()) {
        std::filesystem::create_directories(out.output.parent_path());
    }
    const auto fingerprint = file_fingerprint(options.dump);
    save_compressed_dump(compressed, dump.manifest, fingerprint, out.output);
    out.report_json = compression_report(compressed);
    out.report_json["lineage"] = hex64(fingerprint);
    write_text(out.report, out.report_json.dump(2) + "\n");
    return out;
}

// eval ---------------------------------------------------------------------

EvalOutcome cmd_eval(const EvalOptions& options) {
    const auto original = load_dump(options.original);
    if (!original.report.empty()) {
        throw Error(ErrorCode::invalid_cache, "original dump failed validation: " + describe(original.report.front()));
    }
    const auto compressed = load_compressed_dump(options.compressed);
    const std::string lineage = hex64(file_fingerprint(options.original));
    if (compressed.lineage != lineage) {
        throw Error(ErrorCode::lineage_mismatch,
                    "compressed dump was derived from " + compressed.lineage + ", original is " + lineage);
    }
    const auto& cc = compressed.cache;
    const auto& cache = original.cache;
    if (cc.layers != cache.num_layers() || cc.heads != cache.num_heads() || cc.seq_len != cache.seq_len() ||
        cc.head_dim != cache.head_dim()) {
        throw Error(ErrorCode::lineage_mismatch, "compressed dump dimensions differ from the original");
    }
    for (std::size_t l = 0; l < cc.layers; ++l) {
        for (std::size_t h = 0; h < cc.heads; ++h) {
            const auto& e = cc.at(l, h);
            const auto& head = cache.head(l, h);
            if (e.keys != head.keys.gather_rows(e.retained) || e.values != head.values.gather_rows(e.retained)) {
                throw Error(ErrorCode::lineage_mismatch, "retained rows do not match the original dump");
            }
        }
    }

    const auto queries = eval_queries_for(original.manifest, cache, options.eval_queries, options.eval_seed);
    EvalOutcome out;
    out.report = evaluate(cache, cc, queries, cc.policy.eps);

    // Stage timings come from re-running the recorded policy on the original.
    const WindowSet* windows = original.windows ? &*original.windows : nullptr;
    for (auto& m : out.report.heads) {
        const auto& e = cc.at(m.layer, m.head);
        const ObservationWindow* w = cc.policy.needs_windows() && windows ? &windows->at(m.layer, m.head) : nullptr;
        if (cc.policy.needs_windows() && w == nullptr) {
            continue;
        }
        const std::optional<double> r = cc.policy.mix ? std::optional<double>(e.r_bar) : std::nullopt;
        m.timings = compress_head(cache.head(m.layer, m.head), w, cc.policy, e.budget_effective, r).timings;
    }

    const std::string key = compressed.lineage + "|" + hex64(file_fingerprint(options.compressed)) + "|" +
                            std::to_string(options.eval_seed) + "|" + std::to_string(options.eval_queries);
    out.run_id = hex64(fnv1a64(std::span(reinterpret_cast<const std::uint8_t*>(key.data()), key.size())));

    bool fresh = true;
    if (std::filesystem::exists(options.output)) {
        std::istringstream in(read_text(options.output));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line.rfind("policy,", 0) == 0) {
                continue;
            }
            fresh = false;
            const auto fields = split(line, ',');
            if (!fields.empty() && fields.back() == out.run_id) {
                return out;
            }
        }
    }

    std::ostringstream os;
    if (fresh) {
        os << kEvalHeader << "\n";
    }
    const std::string seed = seed_field(original.manifest);
    for (const auto& m : out.report.heads) {
        os << to_string(cc.policy.base) << ',' << (cc.policy.mix ? 1 : 0) << ',' << cc.policy.budget << ',' << seed
           << ',' << m.layer << ',' << m.head << ',' << format_double(m.r_bar) << ',' << format_double(m.fidelity_l2)
           << ',' << format_double(m.fidelity_cos) << ',' << format_double(m.coverage_gap) << ','
           << format_double(m.memory_ratio) << ',' << format_double(m.timings.scoring_us) << ','
           << format_double(m.timings.diversity_us) << ',' << format_double(m.timings.redundancy_us) << ','
           << format_double(m.timings.selection_us) << ',' << out.run_id << "\n";
    }
    const bool existing_without_rows = std::filesystem::exists(options.output) && fresh;
    if (existing_without_rows) {
        write_text(options.output, os.str());
    } else {
        write_text(options.output, os.str(), true);
    }
    out.rows_written = out.report.heads.size();
    return out;
}

// compare ------------------------------------------------------------------

namespace {

struct CellResult {
    std::size_t policy = 0;
    std::size_t mix = 0;
    std::size_t budget = 0;
    EvalReport report;
};

}  // namespace

CompareOutcome cmd_compare(const ExperimentConfig& config, bool write_files) {
    config.validate();
    const std::size_t n_seeds = config.seeds.size();
    const std::size_t n_cells = config.policies.size() * config.mix_modes.size() * config.budgets.size();
    auto cell_index = [&](std::size_t p, std::size_t m, std::size_t b) {
        return (p * config.mix_modes.size() + m) * config.budgets.size() + b;
    };

    std::vector<std::vector<CellResult>> results(n_seeds, std::vector<CellResult>(n_cells));
    parallel_for(n_seeds, config.workers, [&](std::size_t s) {
        const auto grid = config.generator.grid(config.seeds[s]);
        const auto generated = synth::gen_cache(grid);
        const auto queries = grid_eval_queries(grid, config.eval_queries, config.eval_seed);
        for (std::size_t p = 0; p < config.policies.size(); ++p) {
            for (std::size_t m = 0; m < config.mix_modes.size(); ++m) {
                for (std::size_t b = 0; b < config.budgets.size(); ++b) {
                    const auto policy = config.make_policy(config.policies[p], config.mix_modes[m], config.budgets[b]);
                    const auto compressed = compress_cache(generated.cache, &generated.windows, policy);
                    results[s][cell_index(p, m, b)] = {p, m, b, evaluate(generated.cache, compressed, queries, config.eps)};
                }
            }
        }
    });

    std::ostringstream rows;
    std::ostringstream timings;
    rows << kCompareRowsHeader << "\n";
    timings << kCompareTimingsHeader << "\n";
    for (std::size_t p = 0; p < config.policies.size(); ++p) {
        for (std::size_t m = 0; m < config.mix_modes.size(); ++m) {
            for (std::size_t b = 0; b < config.budgets.size(); ++b) {
                for (std::size_t s = 0; s < n_seeds; ++s) {
                    const auto& cell = results[s][cell_index(p, m, b)];
                    for (const auto& h : cell.report.heads) {
                        const std::string prefix = std::string(to_string(config.policies[p])) + "," +
                                                   (config.mix_modes[m] ? "1" : "0") + "," +
                                                   std::to_string(config.budgets[b]) + "," +
                                                   std::to_string(config.seeds[s]) + "," + std::to_string(h.layer) +
                                                   "," + std::to_string(h.head);
                        rows << prefix << ',' << format_double(h.r_bar) << ',' << format_double(h.fidelity_l2) << ','
                             << format_double(h.fidelity_cos) << ',' << format_double(h.coverage_gap) << ','
                             << format_double(h.memory_ratio) << "\n";
                        timings << prefix << ',' << format_double(h.timings.scoring_us) << ','
                                << format_double(h.timings.diversity_us) << ','
                                << format_double(h.timings.redundancy_us) << ','
                                << format_double(h.timings.selection_us) << "\n";
                    }
                }
            }
        }
    }

    std::ptrdiff_t base_mode = -1;
    std::ptrdiff_t mix_mode = -1;
    for (std::size_t m = 0; m < config.mix_modes.size(); ++m) {
        (config.mix_modes[m] ? mix_mode : base_mode) = static_cast<std::ptrdiff_t>(m);
    }
    std::ostringstream summary;
    summary << kCompareSummaryHeader << "\n";
    for (std::size_t p = 0; p < config.policies.size(); ++p) {
        for (std::size_t b = 0; b < config.budgets.size(); ++b) {
            struct Means {
                double l2 = 0, cos = 0, cov = 0, mem = 0;
            };
            auto means = [&](std::ptrdiff_t m) {
                Means out;
                if (m < 0) {
                    return out;
                }
                for (std::size_t s = 0; s < n_seeds; ++s) {
                    const auto& r = results[s][cell_index(p, static_cast<std::size_t>(m), b)].report;
                    out.l2 += r.fidelity_l2;
                    out.cos += r.fidelity_cos;
                    out.cov += r.coverage_gap;
                    out.mem += r.memory_ratio;
                }
                const double n = static_cast<double>(n_seeds);
                return Means{out.l2 / n, out.cos / n, out.cov / n, out.mem / n};
            };
            auto field = [&](std::ptrdiff_t m, double v) { return m < 0 ? std::string("NA") : format_double(v); };
            const Means base = means(base_mode);
            const Means mixed = means(mix_mode);
            summary << to_string(config.policies[p]) << ',' << config.budgets[b] << ',' << n_seeds << ','
                    << field(base_mode, base.l2) << ',' << field(mix_mode, mixed.l2) << ','
                    << field(base_mode, base.cos) << ',' << field(mix_mode, mixed.cos) << ','
                    << field(base_mode, base.cov) << ',' << field(mix_mode, mixed.cov) << ','
                    << field(base_mode, base.mem) << ',' << field(mix_mode, mixed.mem) << ',';
            if (base_mode < 0 || mix_mode < 0) {
                summary << "NA,NA\n";
                continue;
            }
            std::size_t fid_wins = 0;
            std::size_t cov_wins = 0;
            for (std::size_t s = 0; s < n_seeds; ++s) {
                const auto& rb = results[s][cell_index(p, static_cast<std::size_t>(base_mode), b)].report;
                const auto& rm = results[s][cell_index(p, static_cast<std::size_t>(mix_mode), b)].report;
                fid_wins += rm.fidelity_l2 < rb.fidelity_l2 ? 1 : 0;
                cov_wins += rm.coverage_gap < rb.coverage_gap ? 1 : 0;
            }
            const double n = static_cast<double>(n_seeds);
            summary << format_double(static_cast<double>(fid_wins) / n) << ','
                    << format_double(static_cast<double>(cov_wins) / n) << "\n";
        }
    }

    CompareOutcome out;
    out.rows_csv = rows.str();
    out.summary_csv = summary.str();
    out.timings_csv = timings.str();
    out.rows_path = config.output_dir / "compare_rows.csv";
    out.summary_path = config.output_dir / "compare_summary.csv";
    out.timings_path = config.output_dir / "compare_timings.csv";
    if (write_files) {
        write_text(out.rows_path, out.rows_csv);
        write_text(out.summary_path, out.summary_csv);
        write_text(out.timings_path, out.timings_csv);
    }
    return out;
}

// redundancy-report ----------------------------------------------------------

std::string cmd_redundancy_report(const std::filesystem::path& path, bool naive) {
    const auto dump = load_dump(path);
    if (!dump.report.empty()) {
        throw Error(ErrorCode::invalid_cache, "dump failed validation: " + describe(dump.report.front()));
    }
    std::ostringstream os;
    os << kRedundancyHeader << "\n";
    for (std::size_t l = 0; l < dump.cache.num_layers(); ++l) {
        for (std::size_t h = 0; h < dump.cache.num_heads(); ++h) {
            const auto& head = dump.cache.head(l, h);
            const auto r = naive ? head_redundancy_naive(head) : head_redundancy_fast(head);
            os << l << ',' << h << ',' << format_double(r.r_bar) << ',' << format_double(r.raw) << "\n";
        }
    }
    return os.str();
}

// bench ----------------------------------------------------------------------

std::string cmd_bench(const ExperimentConfig& config,
                      BasePolicy base,
                      std::size_t budget,
                      const std::vector<std::size_t>& seq_lens,
                      std::size_t repetitions) {
    if (seq_lens.empty()) {
        config_error("bench needs at least one sequence length");
    }
    std::ostringstream os;
    os << kBenchHeader << "\n";
    for (std::size_t t : seq_lens) {
        GeneratorConfig gen = config.generator;
        gen.head.seq_len = t;
        gen.head.n_clusters = std::min(gen.head.n_clusters, t);
        const auto generated = synth::gen_cache(gen.grid(config.seeds.empty() ? 0 : config.seeds.front()));
        auto policy = config.make_policy(base, false, budget);
        const auto report = bench_stage_timings(generated.cache, &generated.windows, policy, repetitions);
        auto emit = [&](const char* mode, const StageSamples& samples, const std::string& overhead) {
            const auto med = samples.median();
            os << t << ',' << to_string(base) << ',' << mode << ',' << repetitions << ','
               << format_double(med.scoring_us) << ',' << format_double(med.diversity_us) << ','
               << format_double(med.redundancy_us) << ',' << format_double(med.selection_us) << ','
               << format_double(samples.median_total()) << ',' << overhead << "\n";
        };
        emit("nomix", report.without_mix, "NA");
        emit("mix", report.with_mix, format_double(report.mixing_overhead));
    }
    return os.str();
}

}  // namespace kvmix::experiment
