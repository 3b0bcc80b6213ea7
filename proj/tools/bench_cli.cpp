#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "rlgen/bench.hpp"
#include "rlgen/errors.hpp"

namespace {

struct CliArgs {
    std::string config_path;
    std::string output_dir;
    int workers = 1;
    std::string log_level = "info";
};

void add_common_options(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON run config path")->required();
    cmd->add_option("--output-dir", args.output_dir,
                    "Output directory (overrides the config's output_dir)");
    cmd->add_option("--workers", args.workers, "Worker thread count (default 1)")
        ->check(CLI::Range(1, 256));
    cmd->add_option("--log-level", args.log_level, "quiet | info | debug (stderr only)")
        ->check(CLI::IsMember({"quiet", "info", "debug"}));
}

int log_level_value(const std::string& name) {
    if (name == "quiet") return 0;
    if (name == "debug") return 2;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark workbench for MDP-family generalization experiments"};
    app.require_subcommand(1);
    CliArgs args;
    CLI::App* check = app.add_subcommand("check", "Shared-optimal-policy check -> certificate JSON");
    CLI::App* gap = app.add_subcommand("gap", "Train/eval generalization-gap rows -> CSV");
    CLI::App* sweep = app.add_subcommand("sweep", "Axis sweep -> CSV + summary JSON");
    CLI::App* oracle = app.add_subcommand("oracle", "Brute-force oracle golden files -> JSON");
    for (CLI::App* cmd : {check, gap, sweep, oracle}) add_common_options(cmd, args);
    CLI11_PARSE(app, argc, argv);

    rlgen::bench::RunOptions opts;
    opts.workers = args.workers;
    opts.output_dir = args.output_dir;
    opts.log_level = log_level_value(args.log_level);
    try {
        const rlgen::bench::RunConfig cfg = rlgen::bench::RunConfig::parse_file(args.config_path);
        if (check->parsed()) return rlgen::bench::run_check(cfg, opts);
        if (gap->parsed()) return rlgen::bench::run_gap(cfg, opts);
        if (sweep->parsed()) return rlgen::bench::run_sweep(cfg, opts);
        return rlgen::bench::run_oracle(cfg, opts);
    } catch (const rlgen::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
