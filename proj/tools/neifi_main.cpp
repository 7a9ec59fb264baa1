// Command-line front end: train policies, replay scenarios, run parameter
// sweeps, and list the built-in presets. NEIFI_THREADS caps the worker pool.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "neifi/neifi.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string preset;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
};

neifi::LoadedConfig resolve_config(const CommonOpts& opts) {
    neifi::LoadedConfig lc;
    if (!opts.config_path.empty()) {
        lc = neifi::load_config(opts.config_path);
    }
    if (!opts.preset.empty()) {
        lc.scenario = neifi::find_preset(opts.preset).scenario;
        lc.train.scenario = lc.scenario;
    }
    return lc;
}

std::string scenario_label(const CommonOpts& opts) {
    if (!opts.preset.empty()) return opts.preset;
    return "custom";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"H-NeiFi opinion-guidance simulator"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string method_name = "hneifi";
    std::string policy_path;
    std::size_t n_seeds = 100;
    std::size_t keep = 10;
    bool plot = false;
    int rounds_override = -1;
    std::string arch_name;
    std::string axis;
    std::string values_csv;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "config file path");
        cmd->add_option("--preset", opts.preset, "built-in preset name");
        cmd->add_option("--seed", opts.seed, "master seed");
        cmd->add_option("--out", opts.out_dir, "output directory");
    };

    CLI::App* list_cmd = app.add_subcommand("list-presets", "print the built-in presets");

    CLI::App* run_cmd = app.add_subcommand("run", "evaluate a method over seeded episodes");
    add_common(run_cmd);
    run_cmd->add_option("--method", method_name, "hneifi|pwa|gp|cnr");
    run_cmd->add_option("--policy", policy_path, "policy file (required for hneifi)");
    run_cmd->add_option("--seeds", n_seeds, "number of episodes");
    run_cmd->add_option("--keep", keep, "best-of selection size");
    run_cmd->add_flag("--plot", plot, "emit a trajectory SVG of the best run");

    CLI::App* train_cmd = app.add_subcommand("train", "train a policy and save it");
    add_common(train_cmd);
    train_cmd->add_option("--rounds", rounds_override, "override the training round count");
    train_cmd->add_option("--arch", arch_name, "mlp|lstm|bilstm");

    CLI::App* sweep_cmd = app.add_subcommand("sweep", "train+evaluate across one parameter axis");
    add_common(sweep_cmd);
    sweep_cmd->add_option("--axis", axis, "arch|reward|phi_expert|phi_nonexpert")->required();
    sweep_cmd->add_option("--values", values_csv, "comma-separated axis values")->required();
    sweep_cmd->add_option("--seeds", n_seeds, "evaluation episodes per value");
    sweep_cmd->add_option("--keep", keep, "best-of selection size");
    sweep_cmd->add_option("--rounds", rounds_override, "override the training round count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (list_cmd->parsed()) {
            for (const auto& p : neifi::presets())
                std::cout << p.name << "  -  " << p.description << "\n";
            return 0;
        }

        if (run_cmd->parsed()) {
            neifi::LoadedConfig lc = resolve_config(opts);
            neifi::RunManifest man;
            man.config = lc.scenario;
            man.scenario_name = scenario_label(opts);
            man.method = neifi::method_from_string(method_name);
            man.policy_path = policy_path;
            man.seeds = neifi::derive_seeds(opts.seed, n_seeds);
            man.keep = keep;
            man.out_dir = opts.out_dir;
            man.emit_plot = plot;
            const neifi::EvalResult res = neifi::run_scenario(man);
            if (!res.outcomes.empty()) {
                const auto& st = res.stats;
                std::cout << man.scenario_name << " " << method_name << ": CC "
                          << neifi::fmt(st.cc.mean) << "+-" << neifi::fmt(st.cc.variance)
                          << "  CS " << neifi::fmt(st.cs.mean) << "+-"
                          << neifi::fmt(st.cs.variance) << "  SCD " << neifi::fmt(st.scd.mean)
                          << "+-" << neifi::fmt(st.scd.variance) << "  (best "
                          << st.kept << " of " << st.total << ")\n";
            }
            return 0;
        }

        if (train_cmd->parsed()) {
            neifi::LoadedConfig lc = resolve_config(opts);
            if (rounds_override > 0) lc.train.rounds = rounds_override;
            if (!arch_name.empty())
                lc.train.arch.kind = neifi::arch_kind_from_string(arch_name);
            neifi::RunManifest man;
            man.config = lc.scenario;
            man.scenario_name = scenario_label(opts);
            man.preset = opts.preset;
            man.out_dir = opts.out_dir;
            const auto paths = neifi::train_policy(man, lc.train, opts.seed);
            std::cout << "policy: " << paths.policy_file << "\ncurve:  " << paths.curve_file
                      << "\n";
            return 0;
        }

        if (sweep_cmd->parsed()) {
            neifi::LoadedConfig lc = resolve_config(opts);
            if (rounds_override > 0) lc.train.rounds = rounds_override;
            std::vector<std::string> values;
            for (auto& v : neifi::split(values_csv, ',')) {
                const std::string t = neifi::trim(v);
                if (!t.empty()) values.push_back(t);
            }
            const auto rows = neifi::sweep(lc.train, axis, values, opts.seed, n_seeds, keep);
            std::filesystem::create_directories(opts.out_dir);
            const std::string path = opts.out_dir + "/sweep-" + axis + ".csv";
            neifi::write_file(path, neifi::sweep_csv(axis, rows));
            std::cout << "sweep: " << path << "\n";
            for (const auto& r : rows)
                std::cout << axis << "=" << r.value << ": CC " << neifi::fmt(r.stats.cc.mean)
                          << "  CS " << neifi::fmt(r.stats.cs.mean) << "  SCD "
                          << neifi::fmt(r.stats.scd.mean) << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
