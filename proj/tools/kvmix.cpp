// Copyright (C) 2026 The kvmix Authors
// SPDX-License-Identifier: Apache-2.0

// kvmix: generate, compress, evaluate and compare KV-cache compression runs.
//
// Exit status: 0 ok, 2 config or argument error, 3 data error, 4 internal.
// Failures print one line to stderr: "kvmix: error[<code>]: <message>".

#include <algorithm>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kvmix/error.hpp"
#include "kvmix/experiment.hpp"

namespace ex = kvmix::experiment;

namespace {

void fail_line(std::string_view code, std::string message) {
    std::replace(message.begin(), message.end(), '\n', ' ');
    std::cerr << "kvmix: error[" << code << "]: " << message << '\n';
}

void emit(const std::string& text, const std::string& output) {
    if (output.empty() || output == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(output, std::ios::trunc);
    if (!out || !(out << text)) {
        throw kvmix::Error(kvmix::ErrorCode::io_error, "cannot write " + output);
    }
}

// Flags shared by config-driven subcommands. Each one overrides the config key
// of the same name when given.
struct ConfigFlags {
    std::string config;
    std::string output_dir;
    std::optional<std::size_t> workers;
    std::vector<std::uint64_t> seeds;
    std::vector<std::size_t> budgets;
    std::vector<std::string> policies;
    std::vector<std::string> mix;
    std::optional<std::size_t> eval_queries;
    std::optional<std::uint64_t> eval_seed;
    std::optional<double> eps;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "JSON experiment config");
        app->add_option("-o,--output-dir", output_dir, "output directory");
        app->add_option("--workers", workers, "worker threads");
        app->add_option("--seeds", seeds, "seed list")->delimiter(',');
        app->add_option("--budgets", budgets, "budget list")->delimiter(',');
        app->add_option("--policies", policies, "base policy list")->delimiter(',');
        app->add_option("--mix", mix, "mix modes (0/1, false/true)")->delimiter(',');
        app->add_option("--eval-queries", eval_queries, "held-out queries per head");
        app->add_option("--eval-seed", eval_seed, "seed of the held-out query stream");
        app->add_option("--eps", eps, "normalization guard");
    }

    ex::ExperimentConfig resolve() const {
        ex::ExperimentConfig c = config.empty() ? ex::ExperimentConfig{} : ex::load_config(config);
        if (!output_dir.empty()) {
            c.output_dir = output_dir;
        }
        if (workers) {
            c.workers = *workers;
        }
        if (!seeds.empty()) {
            c.seeds = seeds;
        }
        if (!budgets.empty()) {
            c.budgets = budgets;
        }
        if (!policies.empty()) {
            c.policies.clear();
            for (const auto& p : policies) {
                c.policies.push_back(kvmix::parse_base_policy(p));
            }
        }
        if (!mix.empty()) {
            c.mix_modes.clear();
            for (const auto& m : mix) {
                if (m == "1" || m == "true") {
                    c.mix_modes.push_back(true);
                } else if (m == "0" || m == "false") {
                    c.mix_modes.push_back(false);
                } else {
                    throw kvmix::Error(kvmix::ErrorCode::invalid_config, "bad mix mode '" + m + "'");
                }
            }
        }
        if (eval_queries) {
            c.eval_queries = *eval_queries;
        }
        if (eval_seed) {
            c.eval_seed = *eval_seed;
        }
        if (eps) {
            c.eps = *eps;
        }
        return c;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"KV-cache compression with redundancy-aware importance/diversity mixing"};
    app.require_subcommand(1);

    ConfigFlags gen_flags;
    auto* gen = app.add_subcommand("generate", "write one synthetic dump per seed");
    gen_flags.attach(gen);

    std::string c_dump;
    std::string c_policy = "snapkv";
    std::size_t c_budget = 64;
    std::string c_output;
    std::string c_report;
    std::string c_table;
    std::string c_config;
    std::size_t c_workers = 1;
    std::optional<double> c_eps;
    auto* comp = app.add_subcommand("compress", "compress a dump with one policy");
    comp->add_option("-d,--dump", c_dump, "input dump")->required();
    comp->add_option("-p,--policy", c_policy, "base[+mix], e.g. snapkv+mix");
    comp->add_option("-b,--budget", c_budget, "per-head budget including the window");
    comp->add_option("-o,--output", c_output, "compressed dump path")->required();
    comp->add_option("--report", c_report, "report path (default <output>.report.json)");
    comp->add_option("--r-bar-table", c_table, "fixed per-head r_bar table (layer,head,r_bar)");
    comp->add_option("-c,--config", c_config, "config supplying policy knobs");
    comp->add_option("--workers", c_workers, "worker threads");
    comp->add_option("--eps", c_eps, "normalization guard");

    ex::EvalOptions e_opts;
    std::string e_original;
    std::string e_compressed;
    std::string e_output;
    auto* ev = app.add_subcommand("eval", "append metric rows for a compressed dump");
    ev->add_option("--original", e_original, "original dump")->required();
    ev->add_option("--compressed", e_compressed, "compressed dump")->required();
    ev->add_option("--eval-seed", e_opts.eval_seed, "seed of the held-out query stream");
    ev->add_option("--eval-queries", e_opts.eval_queries, "held-out queries per head");
    ev->add_option("-o,--output", e_output, "metrics CSV (appended)")->required();

    ConfigFlags cmp_flags;
    auto* cmp = app.add_subcommand("compare", "run the policy x mix x budget x seed grid");
    cmp_flags.attach(cmp);

    std::string r_dump;
    std::string r_output;
    bool r_naive = false;
    auto* red = app.add_subcommand("redundancy-report", "per-head r_bar table");
    red->add_option("-d,--dump", r_dump, "input dump")->required();
    red->add_option("-o,--output", r_output, "CSV path (default stdout)");
    red->add_flag("--naive", r_naive, "use the quadratic pairwise computation");

    ConfigFlags b_flags;
    std::string b_policy = "snapkv";
    std::size_t b_budget = 64;
    std::vector<std::size_t> b_lengths{1024, 2048, 4096, 8192};
    std::size_t b_reps = 5;
    std::string b_output;
    auto* bench = app.add_subcommand("bench", "stage timings with mixing off and on");
    b_flags.attach(bench);
    bench->add_option("-p,--policy", b_policy, "base policy");
    bench->add_option("-b,--budget", b_budget, "per-head budget");
    bench->add_option("-T,--seq-lens", b_lengths, "sequence lengths")->delimiter(',');
    bench->add_option("-r,--repetitions", b_reps, "repetitions per mode (>= 3)");
    bench->add_option("--output", b_output, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        fail_line("invalid_argument", e.what());
        return 2;
    }

    if (*gen) {
        for (const auto& p : ex::cmd_generate(gen_flags.resolve())) {
            std::cout << p.string() << '\n';
        }
    } else if (*comp) {
        ex::CompressOptions opts;
        const auto cfg = c_config.empty() ? ex::ExperimentConfig{} : ex::load_config(c_config);
        const auto parsed = kvmix::parse_policy(c_policy);
        opts.policy = cfg.make_policy(parsed.base, parsed.mix, c_budget);
        if (c_eps) {
            opts.policy.eps = *c_eps;
        }
        opts.dump = c_dump;
        opts.output = c_output;
        opts.report = c_report;
        if (!c_table.empty()) {
            opts.r_bar_table = c_table;
        }
        opts.workers = c_workers;
        const auto out = ex::cmd_compress(opts);
        std::cout << out.output.string() << '\n' << out.report.string() << '\n';
    } else if (*ev) {
        e_opts.original = e_original;
        e_opts.compressed = e_compressed;
        e_opts.output = e_output;
        const auto out = ex::cmd_eval(e_opts);
        std::cout << "run_id " << out.run_id << " rows " << out.rows_written << '\n';
    } else if (*cmp) {
        const auto out = ex::cmd_compare(cmp_flags.resolve());
        std::cout << out.summary_csv;
    } else if (*red) {
        emit(ex::cmd_redundancy_report(r_dump, r_naive), r_output);
    } else if (*bench) {
        const auto cfg = b_flags.resolve();
        emit(ex::cmd_bench(cfg, kvmix::parse_base_policy(b_policy), b_budget, b_lengths, b_reps), b_output);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kvmix::Error& e) {
        fail_line(kvmix::to_string(e.code()), e.what());
        return kvmix::exit_status(e.code());
    } catch (const std::filesystem::filesystem_error& e) {
        fail_line("io_error", e.what());
        return 3;
    } catch (const std::exception& e) {
        fail_line("internal", e.what());
        return 4;
    }
}
