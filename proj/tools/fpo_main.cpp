// Command-line driver: validate | brake | solve | sweep | verify |
// config-reference. Flags override config keys through dotted paths; the
// output directory resolves as flag > FPO_OUTPUT_DIR > config.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpo/config.hpp"
#include "fpo/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string output_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("-c,--config", opts.config_file, "JSON run configuration");
    cmd->add_option("--set", opts.overrides,
                    "override a config key by dotted path, e.g. --set minimax.M=96");
    cmd->add_option("-o,--output-dir", opts.output_dir, "output directory override");
}

fpo::RunConfig resolve_config(const CommonOpts& opts) {
    nlohmann::json j = nlohmann::json::object();
    if (!opts.config_file.empty()) {
        std::ifstream in(opts.config_file);
        if (!in) throw fpo::BadConfig("cannot open config file " + opts.config_file);
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw fpo::BadConfig("config parse error in " + opts.config_file + ": " + e.what());
        }
        if (j.contains("fpo_report") && j.contains("config")) j = j.at("config");
    }
    for (const auto& ov : opts.overrides) fpo::apply_override(j, ov);
    return fpo::config_from_json(j);
}

std::filesystem::path resolve_outdir(const CommonOpts& opts, const fpo::RunConfig& cfg) {
    return fpo::resolve_output_dir(opts.output_dir, cfg);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frozen planet orbit solver"};
    app.require_subcommand(1);

    CommonOpts validate_opts, brake_opts, solve_opts, sweep_opts;
    std::string verify_report;

    auto* cmd_validate = app.add_subcommand("validate", "certify the family hypotheses");
    add_common(cmd_validate, validate_opts);
    auto* cmd_brake = app.add_subcommand("brake", "solve the reference brake orbit");
    add_common(cmd_brake, brake_opts);
    auto* cmd_solve = app.add_subcommand("solve", "run the full minimax pipeline");
    add_common(cmd_solve, solve_opts);
    auto* cmd_sweep = app.add_subcommand("sweep", "run an eps or mu continuation");
    add_common(cmd_sweep, sweep_opts);
    auto* cmd_verify = app.add_subcommand("verify", "recheck a solve run's outputs");
    cmd_verify->add_option("-r,--report", verify_report, "report.json of a solve run")->required();
    auto* cmd_reference =
        app.add_subcommand("config-reference", "print every config key with default and meaning");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_reference->parsed()) {
            std::cout << fpo::config_reference_text();
            return fpo::kExitOk;
        }
        if (cmd_validate->parsed()) {
            const auto cfg = resolve_config(validate_opts);
            return fpo::cmd_validate(cfg, resolve_outdir(validate_opts, cfg), std::cout);
        }
        if (cmd_brake->parsed()) {
            const auto cfg = resolve_config(brake_opts);
            return fpo::cmd_brake(cfg, resolve_outdir(brake_opts, cfg), std::cout);
        }
        if (cmd_solve->parsed()) {
            const auto cfg = resolve_config(solve_opts);
            return fpo::cmd_solve(cfg, resolve_outdir(solve_opts, cfg), std::cout);
        }
        if (cmd_sweep->parsed()) {
            const auto cfg = resolve_config(sweep_opts);
            return fpo::cmd_sweep(cfg, resolve_outdir(sweep_opts, cfg), std::cout);
        }
        if (cmd_verify->parsed()) {
            return fpo::cmd_verify(verify_report, std::cout);
        }
    } catch (const fpo::BadConfig& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fpo::kExitConfig;
    } catch (const fpo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fpo::kExitConfig;
    } catch (const fpo::SolverFailure& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return fpo::kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fpo::kExitSolver;
    }
    return fpo::kExitOk;
}
