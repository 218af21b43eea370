// mfgb: scenario-driven solver and verification harness for N-player value
// systems coupled to a mean-field density equation.
//
//   mfgb <check|solve|verify|diagnose> --config <path> [--out <dir>]
//        [--strict] [--seed <u64>]

#include "mfgb/mfgb.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

struct CommonArgs {
    std::string config;
    std::string out;
    bool strict = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "scenario configuration file")->required();
    cmd->add_option("--out", args.out, "output directory (overrides the scenario)");
    cmd->add_flag("--strict", args.strict, "treat parameter-gate failures as errors");
    cmd->add_option("--seed", args.seed, "seed override for all sampling")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

int dispatch(mfgb::Command command, const CommonArgs& args) {
    const mfgb::Scenario scenario = mfgb::parse_config(args.config, args.strict);
    mfgb::RunOptions opts;
    opts.strict = args.strict;
    if (!args.out.empty()) opts.out_dir = args.out;
    if (args.seed_set) opts.seed = args.seed;
    return mfgb::run_scenario(scenario, command, opts);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field game solver and verification harness"};
    app.require_subcommand(1);

    CommonArgs args;
    mfgb::Command command = mfgb::Command::check;
    auto* check = app.add_subcommand("check", "run the gate and assumption checker");
    auto* solve = app.add_subcommand("solve", "run the coupled forward-backward solver");
    auto* verify = app.add_subcommand("verify", "stationarity and sensitivity checks");
    auto* diagnose = app.add_subcommand("diagnose", "estimate diagnostics and sampled bounds");
    for (auto* cmd : {check, solve, verify, diagnose}) add_common(cmd, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    if (check->parsed()) command = mfgb::Command::check;
    if (solve->parsed()) command = mfgb::Command::solve;
    if (verify->parsed()) command = mfgb::Command::verify;
    if (diagnose->parsed()) command = mfgb::Command::diagnose;

    try {
        return dispatch(command, args);
    } catch (const mfgb::ConfigError& e) {
        std::cerr << "[mfgb] configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "[mfgb] error: " << e.what() << "\n";
        return 1;
    }
}
