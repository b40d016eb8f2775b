// Command-line entry point: gen, scoremap, plan, eval, losses.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "uncmap/uncmap.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kValidation = 2, kIo = 3 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string uncertainty;
    std::string lane_reg;
    std::optional<int> mc_samples;
    std::optional<double> tau_drive;
    std::optional<double> beta;
    std::string suite;
    std::optional<int> seeds;
};

bool parse_toggle(const std::string& v) { return v == "on"; }

uncmap::RunConfig effective_config(const Overrides& ov) {
    uncmap::RunConfig rc = ov.config.empty() ? uncmap::RunConfig{} : uncmap::load_run_config(ov.config);
    auto& o = rc.options;
    if (ov.seed) {
        rc.seed = *ov.seed;
        o.map_mc.seed = o.loss_mc.seed = *ov.seed;
    }
    if (!ov.out.empty()) rc.out_dir = ov.out;
    if (!ov.uncertainty.empty()) o.uncertainty = parse_toggle(ov.uncertainty);
    if (!ov.lane_reg.empty()) o.lane_reg = parse_toggle(ov.lane_reg);
    if (ov.mc_samples) o.map_mc.num_samples = *ov.mc_samples;
    if (ov.tau_drive) o.tau_drive = *ov.tau_drive;
    if (ov.beta) o.beta = *ov.beta;
    if (!ov.suite.empty() || ov.seeds) {
        if (!rc.sweep) rc.sweep = uncmap::SweepSpec{};
        if (!ov.suite.empty()) rc.sweep->suite = ov.suite;
        if (ov.seeds) rc.sweep->seeds = *ov.seeds;
    }
    return rc;
}

void add_common(CLI::App* cmd, Overrides& ov) {
    const auto toggle = CLI::IsMember({"on", "off"});
    cmd->add_option("--config", ov.config, "RunConfig JSON file");
    cmd->add_option("--seed", ov.seed, "Scenario and Monte-Carlo seed");
    cmd->add_option("--out", ov.out, "Output directory");
    cmd->add_option("--uncertainty", ov.uncertainty, "Uncertainty-aware score map (on|off)")->check(toggle);
    cmd->add_option("--lane-reg", ov.lane_reg, "Lane-regularized selection (on|off)")->check(toggle);
    cmd->add_option("--mc-samples", ov.mc_samples, "Monte-Carlo samples for the score map");
    cmd->add_option("--tau-drive", ov.tau_drive, "Non-drivable threshold on p_pos");
    cmd->add_option("--beta", ov.beta, "Safety weight in the candidate posterior");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uncertainty-aware BEV drivable maps and candidate planning"};
    app.require_subcommand(1);
    Overrides ov;
    std::map<std::string, uncmap::Warnings (*)(const uncmap::RunConfig&)> verbs = {
        {"gen", &uncmap::cmd_gen},   {"scoremap", &uncmap::cmd_scoremap}, {"plan", &uncmap::cmd_plan},
        {"eval", &uncmap::cmd_eval}, {"losses", &uncmap::cmd_losses}};
    const std::map<std::string, std::string> help = {
        {"gen", "Write a synthetic scene: truth grid, logit field, expert and candidates"},
        {"scoremap", "Build the drivable score map and its calibration report"},
        {"plan", "Weight candidates against the score map and select a plan"},
        {"eval", "Run a scenario sweep and report compliance metrics"},
        {"losses", "Evaluate every loss term and finite-difference gradient checks"}};
    for (const auto& [name, fn] : verbs) {
        auto* cmd = app.add_subcommand(name, help.at(name));
        add_common(cmd, ov);
        if (name == "eval") {
            cmd->add_option("--suite", ov.suite, "Built-in scenario suite (avoidance|lane-keeping)");
            cmd->add_option("--seeds", ov.seeds, "Seeds per suite or scenario file");
        }
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }
    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        const auto rc = effective_config(ov);
        for (const auto& w : verbs.at(verb)(rc)) std::cerr << "warning: " << w << '\n';
        return kOk;
    } catch (const uncmap::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const uncmap::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}
