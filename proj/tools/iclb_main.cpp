// Command-line front end: full sweeps, single oracle cells, resumption,
// report regeneration, standalone pool selection, and the max-pool-size
// statistic.

#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "iclb/errors.hpp"
#include "iclb/experiment.hpp"

namespace {

using iclb::ExperimentConfig;

void print_report(const iclb::EvalReport& report) {
    std::cout << "run dir: " << report.run_dir << "\n";
    std::cout << "cells done: " << report.cells.size()
              << ", failed: " << report.failed_cells << "\n";
    if (report.oracle_value > 0.0) {
        std::cout << "oracle primary metric: " << report.oracle_value << "\n";
    }
    std::cout << "wrote results.csv, aggregate.csv, plot_data.json\n";
}

iclb::Pool select_standalone(const ExperimentConfig& config,
                             iclb::PreparedInputs& inputs, const std::string& strategy,
                             std::size_t k, std::uint64_t seed) {
    iclb::GeometryOptions geometry{config.l2_normalize};
    if (strategy == "random") return iclb::select_random(inputs.train_ids, k, seed);
    if (strategy == "central") {
        return iclb::select_central(inputs.store, inputs.train_ids, k, geometry);
    }
    if (strategy == "cluster") {
        return iclb::select_cluster(inputs.store, inputs.train_ids, k, seed, geometry);
    }
    if (strategy == "votek") {
        return iclb::select_vote_k(inputs.store, inputs.train_ids, k, config.votek,
                                   std::nullopt, seed, geometry);
    }
    throw iclb::ConfigError("unknown strategy: " + strategy);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-constrained demonstration selection experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string manifest_path;
    std::string run_dir;
    std::string strategy = "random";
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::string out_path;

    CLI::App* cmd_run = app.add_subcommand("run", "Execute the full sweep");
    cmd_run->add_option("--config", config_path, "Experiment config JSON")->required();

    CLI::App* cmd_oracle =
        app.add_subcommand("oracle", "Evaluate the full-train-pool reference cell");
    cmd_oracle->add_option("--config", config_path, "Experiment config JSON")->required();

    CLI::App* cmd_resume =
        app.add_subcommand("resume", "Complete pending cells of an existing run");
    cmd_resume->add_option("--manifest", manifest_path, "Path to manifest.json")
        ->required();

    CLI::App* cmd_report =
        app.add_subcommand("report", "Regenerate CSV/plot outputs from cell artifacts");
    cmd_report->add_option("--run-dir", run_dir, "Run directory")->required();

    CLI::App* cmd_select =
        app.add_subcommand("select-pool", "Select an annotation pool and print it");
    cmd_select->add_option("--config", config_path, "Experiment config JSON")->required();
    cmd_select->add_option("--strategy", strategy, "random|central|cluster|votek")
        ->required();
    cmd_select->add_option("--k", k, "Pool size")->required();
    cmd_select->add_option("--seed", seed, "Selection seed");
    cmd_select->add_option("--out", out_path, "Write pool JSON here instead of stdout");

    CLI::App* cmd_mps = app.add_subcommand(
        "max-pool-size", "Print the union size of per-test-sample neighbor sets");
    cmd_mps->add_option("--config", config_path, "Experiment config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_run->parsed()) {
            iclb::EvalReport report = iclb::run(ExperimentConfig::load_file(config_path));
            print_report(report);
            return report.ok() ? 0 : 1;
        }
        if (cmd_oracle->parsed()) {
            iclb::CellResult cell =
                iclb::run_oracle(ExperimentConfig::load_file(config_path));
            std::cout << "oracle pool size: " << cell.pool_size << "\n";
            std::cout << "oracle primary metric: " << cell.metric.primary() << "\n";
            return 0;
        }
        if (cmd_resume->parsed()) {
            iclb::EvalReport report = iclb::resume(manifest_path);
            print_report(report);
            return report.ok() ? 0 : 1;
        }
        if (cmd_report->parsed()) {
            iclb::EvalReport report = iclb::report(run_dir);
            print_report(report);
            return report.ok() ? 0 : 1;
        }
        if (cmd_select->parsed()) {
            ExperimentConfig config = ExperimentConfig::load_file(config_path);
            iclb::PreparedInputs inputs = iclb::prepare_inputs(config);
            iclb::Pool pool = select_standalone(config, inputs, strategy, k, seed);
            std::string text = pool.to_json().dump(2) + "\n";
            if (out_path.empty()) {
                std::cout << text;
            } else {
                std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
                if (!out) throw iclb::ConfigError("cannot write file: " + out_path);
                out << text;
            }
            return 0;
        }
        if (cmd_mps->parsed()) {
            ExperimentConfig config = ExperimentConfig::load_file(config_path);
            iclb::PreparedInputs inputs = iclb::prepare_inputs(config);
            std::cout << inputs.max_pool_size << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
