#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neifi/acp.hpp"
#include "neifi/baselines.hpp"
#include "neifi/io.hpp"
#include "neifi/metrics.hpp"
#include "neifi/parallel.hpp"
#include "neifi/policy.hpp"
#include "neifi/presets.hpp"
#include "neifi/svg.hpp"

namespace neifi {

enum class Method { HNeiFi, PWA, GP, CNR };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::HNeiFi: return "hneifi";
        case Method::PWA: return "pwa";
        case Method::GP: return "gp";
        case Method::CNR: return "cnr";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "hneifi") return Method::HNeiFi;
    if (s == "pwa") return Method::PWA;
    if (s == "gp") return Method::GP;
    if (s == "cnr") return Method::CNR;
    throw std::invalid_argument("unknown method: " + s);
}

inline BaselineKind baseline_for(Method m) {
    BaselineKind bk;
    switch (m) {
        case Method::PWA: bk.kind = BaselineKind::Kind::PWA; break;
        case Method::GP: bk.kind = BaselineKind::Kind::GP; break;
        case Method::CNR: bk.kind = BaselineKind::Kind::CNR; break;
        case Method::HNeiFi: throw std::invalid_argument("hneifi is not a baseline");
    }
    return bk;
}

// ---------------------------------------------------------------------------
// Config file: `key = value` lines, `#` comments, bracketed section headers.
// Missing keys keep their defaults; unknown keys or sections are errors.
// ---------------------------------------------------------------------------

struct LoadedConfig {
    ScenarioConfig scenario;
    TrainConfig train; ///< train.scenario mirrors `scenario`
};

namespace detail {

inline void parse_config_line(const std::string& key, const std::string& value, int line_no,
                              LoadedConfig& out) {
    auto err = [&](const std::string& what) {
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + what);
    };
    auto num = [&](const std::string& v) {
        try {
            return parse_double(v);
        } catch (const std::exception&) {
            err("bad number for '" + key + "'");
            return 0.0;
        }
    };
    auto integer = [&](const std::string& v) {
        try {
            return static_cast<int>(parse_int(v));
        } catch (const std::exception&) {
            err("bad integer for '" + key + "'");
            return 0;
        }
    };
    auto boolean = [&](const std::string& v) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        err("bad boolean for '" + key + "'");
        return false;
    };

    ScenarioConfig& sc = out.scenario;
    TrainConfig& tc = out.train;

    if (key == "n_experts") sc.n_experts = integer(value);
    else if (key == "m_nonexperts") sc.m_nonexperts = integer(value);
    else if (key == "x_min") sc.x_min = num(value);
    else if (key == "x_max") sc.x_max = num(value);
    else if (key == "U") sc.global_goal = num(value);
    else if (key == "T") sc.max_steps = integer(value);
    else if (key == "omega") sc.omega = num(value);
    else if (key == "r_c") sc.r_c = num(value);
    else if (key == "beta") sc.beta = num(value);
    else if (key == "mu") sc.mu = num(value);
    else if (key == "p") sc.p = num(value);
    else if (key == "q") sc.q = num(value);
    else if (key == "phi_expert_min") sc.phi_expert_min = num(value);
    else if (key == "phi_expert_max") sc.phi_expert_max = num(value);
    else if (key == "phi_nonexpert_min") sc.phi_nonexpert_min = num(value);
    else if (key == "phi_nonexpert_max") sc.phi_nonexpert_max = num(value);
    else if (key == "delta_c") sc.delta_c = num(value);
    else if (key == "expert_init_opinions") {
        sc.expert_init_opinions.clear();
        for (const auto& part : split(value, ','))
            sc.expert_init_opinions.push_back(num(trim(part)));
    } else if (key == "init_mode") {
        if (value == "uniform") sc.init_mode = InitMode::Uniform;
        else if (value == "explicit-intervals") sc.init_mode = InitMode::ExplicitIntervals;
        else err("init_mode must be 'uniform' or 'explicit-intervals'");
    } else if (key == "init_intervals") {
        sc.init_intervals.clear();
        for (const auto& part : split(value, ',')) {
            const auto fields = split(trim(part), ':');
            if (fields.size() != 3) err("init_intervals entries must be lo:hi:count");
            OpinionInterval iv;
            iv.lo = num(trim(fields[0]));
            iv.hi = num(trim(fields[1]));
            iv.count = integer(trim(fields[2]));
            sc.init_intervals.push_back(iv);
        }
    } else if (key == "pcp_mu_mode") {
        if (value == "floor") sc.pcp_mu_mode = PcpMuMode::StopAfterCrossing;
        else if (value == "cap") sc.pcp_mu_mode = PcpMuMode::StopBeforeCrossing;
        else err("pcp_mu_mode must be 'floor' or 'cap'");
    } else if (key == "consensus_includes_experts") {
        sc.consensus_includes_experts = boolean(value);
    } else if (key == "M") tc.rounds = integer(value);
    else if (key == "alpha") tc.learning_rate = num(value);
    else if (key == "eps_max") tc.eps_max = num(value);
    else if (key == "eps_period") tc.eps_period = integer(value);
    else if (key == "arch") {
        try {
            tc.arch.kind = arch_kind_from_string(value);
        } catch (const std::exception&) {
            err("arch must be mlp, lstm or bilstm");
        }
    } else if (key == "logprob_mode") {
        if (value == "sum-kept") tc.logprob_mode = ActionLogProbMode::SumKept;
        else if (value == "bernoulli") tc.logprob_mode = ActionLogProbMode::Bernoulli;
        else err("logprob_mode must be 'sum-kept' or 'bernoulli'");
    } else if (key == "exclude_explored") tc.exclude_explored_steps = boolean(value);
    else if (key == "full_horizon_rollouts") tc.full_horizon_rollouts = boolean(value);
    else if (key == "xi_l") tc.reward.xi_local = num(value);
    else if (key == "xi_g") tc.reward.xi_global = num(value);
    else if (key == "reward_mode") {
        if (value == "both") { tc.reward.use_local = true; tc.reward.use_global = true; }
        else if (value == "g1-only") { tc.reward.use_local = true; tc.reward.use_global = false; }
        else if (value == "g2-only") { tc.reward.use_local = false; tc.reward.use_global = true; }
        else err("reward_mode must be 'both', 'g1-only' or 'g2-only'");
    } else if (key == "sdim") tc.arch.input_dim = integer(value);
    else if (key == "adim") tc.arch.output_dim = integer(value);
    else if (key == "hdim") tc.arch.hidden_dim = integer(value);
    else if (key == "hlays") tc.arch.hidden_layers = integer(value);
    else err("unknown key '" + key + "'");
}

} // namespace detail

/// Parses the structured key-value config text. Defaults fill every key that
/// the file does not mention.
inline LoadedConfig parse_config(const std::string& text) {
    static const std::vector<std::string> known_sections = {"scenario", "train", "reward",
                                                            "network", "harness"};
    LoadedConfig out;
    int line_no = 0;
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": unterminated section header");
            const std::string section = trim(line.substr(1, line.size() - 2));
            if (std::find(known_sections.begin(), known_sections.end(), section) ==
                known_sections.end())
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected 'key = value'");
        detail::parse_config_line(key, value, line_no, out);
    }
    out.train.scenario = out.scenario;
    out.scenario.validate();
    out.train.validate();
    return out;
}

inline LoadedConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Batch evaluation
// ---------------------------------------------------------------------------

/// One batch of episodes of a single method on a single scenario.
struct EvalRequest {
    ScenarioConfig scenario;
    std::string scenario_name = "custom";
    Method method = Method::HNeiFi;
    std::optional<PolicyParams> policy; ///< required for hneifi
    std::vector<std::uint64_t> seeds;
    std::size_t keep = 10;
};

struct EvalResult {
    std::vector<RunOutcome> outcomes; ///< in seed order
    BatchStats stats;
    std::size_t best_index = 0; ///< seed index of the lexicographically best run
};

inline RunOutcome run_single_episode(const ScenarioConfig& cfg, Method method,
                                     const PackedPolicy* policy, std::uint64_t seed,
                                     Trajectory* trajectory = nullptr) {
    Rng rng(seed);
    WorldState w0 = init_world(cfg, rng);
    if (method == Method::HNeiFi) {
        RewardParams rp; // rewards are irrelevant during evaluation
        const EpisodeTrace trace =
            rollout_episode(w0, *policy, 0.0, cfg, rp, rng, trajectory);
        return run_outcome(trace.terminal, trace.horizon, trace.cause, cfg);
    }
    const EpisodeResult res =
        run_baseline_episode(w0, baseline_for(method), cfg, rng, trajectory);
    return run_outcome(res.terminal, res.steps, res.cause, cfg);
}

/// Runs every seed (episode-level parallelism), ranks outcomes, and reports
/// kept-set statistics.
inline EvalResult evaluate(const EvalRequest& req) {
    req.scenario.validate();
    if (req.method == Method::HNeiFi && !req.policy.has_value())
        throw std::invalid_argument("evaluate: method hneifi requires a policy");
    if (req.seeds.empty()) throw std::invalid_argument("evaluate: no seeds");
    if (req.keep == 0 || req.keep > req.seeds.size())
        throw std::invalid_argument("evaluate: keep must be in [1, seeds]");

    std::optional<PackedPolicy> packed;
    if (req.policy) packed.emplace(*req.policy);

    EvalResult res;
    res.outcomes.resize(req.seeds.size());
    parallel_for(req.seeds.size(), [&](std::size_t i) {
        res.outcomes[i] = run_single_episode(req.scenario, req.method,
                                             packed ? &*packed : nullptr, req.seeds[i]);
    });
    res.stats = batch_stats(res.outcomes, req.keep);

    res.best_index = 0;
    for (std::size_t i = 1; i < res.outcomes.size(); ++i) {
        const auto& a = res.outcomes[i];
        const auto& b = res.outcomes[res.best_index];
        const bool better = a.cc != b.cc   ? a.cc < b.cc
                            : a.cs != b.cs ? a.cs < b.cs
                                           : a.scd < b.scd;
        if (better) res.best_index = i;
    }
    return res;
}

// ---------------------------------------------------------------------------
// CSV emission. All files lead with a versioned schema comment; doubles use
// shortest round-trip formatting so outputs are byte-stable.
// ---------------------------------------------------------------------------

inline std::string runs_csv(const EvalRequest& req, const EvalResult& res) {
    std::string s = "# neifi run v1\nseed,method,scenario,cc,cs,scd,terminated_by\n";
    for (std::size_t i = 0; i < res.outcomes.size(); ++i) {
        const auto& o = res.outcomes[i];
        s += std::to_string(req.seeds[i]) + "," + to_string(req.method) + "," +
             req.scenario_name + "," + std::to_string(o.cc) + "," + std::to_string(o.cs) +
             "," + fmt(o.scd) + "," + to_string(o.terminated_by) + "\n";
    }
    return s;
}

/// Parses one runs-CSV row back into a RunOutcome (schema round-trip).
inline RunOutcome parse_run_row(const std::string& row) {
    const auto f = split(row, ',');
    if (f.size() != 7) throw std::invalid_argument("run row: expected 7 fields");
    RunOutcome o;
    o.cc = static_cast<int>(parse_int(f[3]));
    o.cs = static_cast<int>(parse_int(f[4]));
    o.scd = parse_double(f[5]);
    o.terminated_by = termination_cause_from_string(f[6]);
    return o;
}

inline std::string summary_csv(const EvalRequest& req, const EvalResult& res) {
    const auto& st = res.stats;
    std::string s =
        "# neifi summary v1\n"
        "scenario,method,total,kept,cc_mean,cc_var,cs_mean,cs_var,scd_mean,scd_var\n";
    s += req.scenario_name + "," + to_string(req.method) + "," + std::to_string(st.total) +
         "," + std::to_string(st.kept) + "," + fmt(st.cc.mean) + "," + fmt(st.cc.variance) +
         "," + fmt(st.cs.mean) + "," + fmt(st.cs.variance) + "," + fmt(st.scd.mean) + "," +
         fmt(st.scd.variance) + "\n";
    return s;
}

inline std::string curve_csv(const TrainResult& tr) {
    std::string s = "# neifi curve v1\nround,epsilon,mean_return\n";
    for (std::size_t r = 0; r < tr.mean_returns.size(); ++r)
        s += std::to_string(r) + "," + fmt(tr.epsilons[r]) + "," + fmt(tr.mean_returns[r]) +
             "\n";
    return s;
}

// ---------------------------------------------------------------------------
// Manifest-level operations backing the CLI subcommands
// ---------------------------------------------------------------------------

/// What to execute: which preset/config, which seeds, where to write.
struct RunManifest {
    std::string preset;                  ///< empty when an explicit config is supplied
    std::optional<ScenarioConfig> config;
    std::string scenario_name = "custom";
    Method method = Method::HNeiFi;
    std::string policy_path;
    std::vector<std::uint64_t> seeds;
    std::size_t keep = 10;
    std::string out_dir = ".";
    bool emit_plot = false;
};

inline ScenarioConfig resolve_scenario(const RunManifest& man, std::string& name_out) {
    if (!man.preset.empty()) {
        const auto& p = find_preset(man.preset);
        name_out = p.name;
        return p.scenario;
    }
    if (!man.config) throw std::invalid_argument("manifest: preset or config required");
    name_out = man.scenario_name;
    return *man.config;
}

inline std::vector<std::uint64_t> derive_seeds(std::uint64_t master, std::size_t count) {
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i) seeds[i] = derive_seed(master, i);
    return seeds;
}

/// Executes the manifest: every episode, the outcome CSV, the kept-set
/// summary, and optionally a trajectory SVG of the best run (re-simulated
/// with recording on).
inline EvalResult run_scenario(const RunManifest& man) {
    EvalRequest req;
    req.scenario = resolve_scenario(man, req.scenario_name);
    req.method = man.method;
    req.seeds = man.seeds;
    req.keep = std::min<std::size_t>(man.keep, std::max<std::size_t>(man.seeds.size(), 1));
    if (man.method == Method::HNeiFi) {
        if (man.policy_path.empty())
            throw std::invalid_argument("run: method hneifi requires --policy");
        req.policy = deserialize(read_binary_file(man.policy_path));
    }

    std::filesystem::create_directories(man.out_dir);
    const std::string base = man.out_dir + "/" + req.scenario_name + "-" +
                             to_string(man.method);
    if (man.seeds.empty()) {
        write_file(base + "-runs.csv",
                   std::string("# neifi run v1\nseed,method,scenario,cc,cs,scd,terminated_by\n"));
        return EvalResult{};
    }

    EvalResult res = evaluate(req);
    write_file(base + "-runs.csv", runs_csv(req, res));
    write_file(base + "-summary.csv", summary_csv(req, res));

    if (man.emit_plot) {
        Trajectory traj;
        std::optional<PackedPolicy> packed;
        if (req.policy) packed.emplace(*req.policy);
        run_single_episode(req.scenario, req.method, packed ? &*packed : nullptr,
                           req.seeds[res.best_index], &traj);
        const std::string title = req.scenario_name + " / " + to_string(man.method) +
                                  " (seed " + std::to_string(req.seeds[res.best_index]) + ")";
        write_file(base + ".svg", trajectory_svg(traj, req.scenario, title));
    }
    return res;
}

/// Trains a policy on the manifest's scenario and persists it plus the
/// per-round return curve.
struct TrainPaths {
    std::string policy_file;
    std::string curve_file;
};

inline TrainPaths train_policy(const RunManifest& man, TrainConfig tc, std::uint64_t seed) {
    std::string name;
    tc.scenario = resolve_scenario(man, name);
    tc.validate();
    Rng rng(seed);
    const TrainResult tr = train(tc, rng);

    std::filesystem::create_directories(man.out_dir);
    TrainPaths paths;
    paths.policy_file = man.out_dir + "/" + name + "-" + to_string(tc.arch.kind) + ".policy";
    paths.curve_file = man.out_dir + "/" + name + "-" + to_string(tc.arch.kind) + "-curve.csv";
    write_file(paths.policy_file, serialize(tr.params));
    write_file(paths.curve_file, curve_csv(tr));
    return paths;
}

// ---------------------------------------------------------------------------
// Parameter sweeps (stubbornness ranges, reward components, model kind)
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string value;
    BatchStats stats;
};

/// Applies one sweep value to a training configuration.
inline void apply_sweep_value(TrainConfig& tc, const std::string& axis,
                              const std::string& value) {
    auto parse_range = [&](double& lo, double& hi) {
        const auto f = split(value, ':');
        if (f.size() != 2)
            throw std::invalid_argument("sweep: range values must look like lo:hi");
        lo = parse_double(trim(f[0]));
        hi = parse_double(trim(f[1]));
    };
    if (axis == "arch") {
        tc.arch.kind = arch_kind_from_string(value);
    } else if (axis == "reward") {
        if (value == "both") { tc.reward.use_local = true; tc.reward.use_global = true; }
        else if (value == "g1-only") { tc.reward.use_local = true; tc.reward.use_global = false; }
        else if (value == "g2-only") { tc.reward.use_local = false; tc.reward.use_global = true; }
        else throw std::invalid_argument("sweep: reward value must be both, g1-only or g2-only");
    } else if (axis == "phi_expert") {
        parse_range(tc.scenario.phi_expert_min, tc.scenario.phi_expert_max);
    } else if (axis == "phi_nonexpert") {
        parse_range(tc.scenario.phi_nonexpert_min, tc.scenario.phi_nonexpert_max);
    } else {
        throw std::invalid_argument("sweep: unknown axis '" + axis + "'");
    }
}

/// One train+evaluate cycle per sweep value. Every value trains from its own
/// derived seed but is evaluated on the same seed list for comparability.
inline std::vector<SweepRow> sweep(const TrainConfig& base, const std::string& axis,
                                   const std::vector<std::string>& values,
                                   std::uint64_t master_seed, std::size_t eval_episodes,
                                   std::size_t keep) {
    if (values.empty()) throw std::invalid_argument("sweep: empty value list");
    { // reject unknown axes before doing any work
        TrainConfig probe = base;
        apply_sweep_value(probe, axis, values.front());
    }
    const auto eval_seeds = derive_seeds(detail::splitmix64(master_seed ^ 0x5eedULL),
                                         eval_episodes);
    std::vector<SweepRow> rows;
    for (std::size_t vi = 0; vi < values.size(); ++vi) {
        TrainConfig tc = base;
        apply_sweep_value(tc, axis, values[vi]);
        tc.validate();
        Rng rng(derive_seed(master_seed, vi));
        const TrainResult tr = train(tc, rng);

        EvalRequest req;
        req.scenario = tc.scenario;
        req.scenario_name = axis + "=" + values[vi];
        req.method = Method::HNeiFi;
        req.policy = tr.params;
        req.seeds = eval_seeds;
        req.keep = keep;
        rows.push_back({values[vi], evaluate(req).stats});
    }
    return rows;
}

inline std::string sweep_csv(const std::string& axis, const std::vector<SweepRow>& rows) {
    std::string s =
        "# neifi sweep v1\n"
        "axis,value,total,kept,cc_mean,cc_var,cs_mean,cs_var,scd_mean,scd_var\n";
    for (const auto& r : rows)
        s += axis + "," + r.value + "," + std::to_string(r.stats.total) + "," +
             std::to_string(r.stats.kept) + "," + fmt(r.stats.cc.mean) + "," +
             fmt(r.stats.cc.variance) + "," + fmt(r.stats.cs.mean) + "," +
             fmt(r.stats.cs.variance) + "," + fmt(r.stats.scd.mean) + "," +
             fmt(r.stats.scd.variance) + "\n";
    return s;
}

} // namespace neifi
