#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "neifi/acp.hpp"

using namespace neifi;

namespace {

WorldState obs_world(double expert_opinion, const std::vector<double>& nonexpert_ops) {
    WorldState w;
    w.experts.push_back({0, expert_opinion, 0.85});
    for (std::size_t i = 0; i < nonexpert_ops.size(); ++i)
        w.nonexperts.push_back({static_cast<int>(i), nonexpert_ops[i], 0.5});
    w.partition.expert_group = {0};
    w.partition.nonexpert_group.assign(nonexpert_ops.size(), 0);
    w.partition.group_count = 1;
    return w;
}

ScenarioConfig obs_config(double goal) {
    ScenarioConfig cfg;
    cfg.x_min = -10;
    cfg.x_max = 10;
    cfg.global_goal = goal;
    cfg.n_experts = 1;
    cfg.m_nonexperts = 4;
    cfg.p = 0.1;
    cfg.q = 0.9;
    cfg.r_c = 1.0;
    return cfg;
}

} // namespace

TEST_CASE("observation clamps the focal distances at 0.1") {
    // expert (= local goal) at 2, focal at 1.95: both goal distances are 0.05
    const auto w = obs_world(2.0, {1.95, 1.5});
    const auto cfg = obs_config(2.0);
    Rng rng(1);
    const auto obs = build_observation(w, cfg, 0, rng);
    REQUIRE(obs.d_local == 0.1);
    REQUIRE(obs.d_global == 0.1);
    // neighbor distance stays unclamped in the numerator: 0.5 / 0.1 = 5
    REQUIRE(obs.local_ratios[0] == Catch::Approx(5.0));
}

TEST_CASE("ratio boundaries: at the goal and at equal distance") {
    const auto cfg = obs_config(2.0);
    SECTION("neighbor exactly at the local goal contributes 0") {
        const auto w = obs_world(2.0, {1.3, 2.0});
        Rng rng(1);
        const auto obs = build_observation(w, cfg, 0, rng);
        REQUIRE(obs.local_ratios[0] == 0.0);
        REQUIRE(obs.global_ratios[0] == 0.0);
    }
    SECTION("neighbor at the focal agent's distance contributes exactly 1") {
        const auto w = obs_world(2.0, {1.6, 2.4}); // both 0.4 from the goal
        Rng rng(1);
        const auto obs = build_observation(w, cfg, 0, rng);
        REQUIRE(obs.local_ratios[0] == Catch::Approx(1.0));
    }
    SECTION("isolated agents have no observation") {
        const auto w = obs_world(2.0, {1.0, 8.0});
        Rng rng(1);
        REQUIRE_THROWS_AS(build_observation(w, cfg, 0, rng), std::invalid_argument);
    }
}

TEST_CASE("the shuffled position map is a permutation of the neighborhood") {
    const auto cfg = obs_config(0.0);
    const auto w = obs_world(0.0, {0.0, 0.2, -0.3, 0.5, 0.9, -0.8});
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const auto obs = build_observation(w, cfg, 0, rng);
        auto ids = obs.neighbor_ids;
        std::sort(ids.begin(), ids.end());
        REQUIRE(ids == neighbor_set(w, cfg, 0));
        // rows must describe the neighbor their position maps to
        for (int pos = 0; pos < obs.length(); ++pos) {
            const int j = obs.neighbor_ids[pos];
            const double expect =
                std::abs(w.nonexperts[j].opinion - cfg.global_goal) / obs.d_global;
            REQUIRE(obs.global_ratios[pos] == Catch::Approx(expect));
        }
    }
}

TEST_CASE("sequence rows carry the broadcast focal distances") {
    const auto cfg = obs_config(2.0);
    const auto w = obs_world(2.0, {1.0, 1.5, 0.5});
    Rng rng(3);
    const auto obs = build_observation(w, cfg, 0, rng);
    const auto seq = to_sequence(obs);
    REQUIRE(seq.dim == 4);
    REQUIRE(seq.length() == obs.length());
    for (int t = 0; t < seq.length(); ++t) {
        REQUIRE(seq.row(t)[0] == obs.local_ratios[t]);
        REQUIRE(seq.row(t)[1] == obs.global_ratios[t]);
        REQUIRE(seq.row(t)[2] == obs.d_local);
        REQUIRE(seq.row(t)[3] == obs.d_global);
    }
}

TEST_CASE("neighbor selection keeps above-mean probabilities") {
    AgentObservation obs;
    obs.neighbor_ids = {5, 9, 2, 7};
    obs.local_ratios.assign(4, 1.0);
    obs.global_ratios.assign(4, 1.0);
    Rng rng(1);

    SECTION("above-mean positions survive") {
        const auto rec = select_neighbors(obs, {0.4, 0.3, 0.2, 0.1}, 0.0, rng);
        REQUIRE(rec.threshold == Catch::Approx(0.25));
        REQUIRE(rec.kept == std::vector<std::uint8_t>{1, 1, 0, 0});
        REQUIRE_FALSE(rec.explored);
    }
    SECTION("uniform probabilities keep everyone (>= at the boundary)") {
        const auto rec = select_neighbors(obs, {0.25, 0.25, 0.25, 0.25}, 0.0, rng);
        REQUIRE(rec.kept == std::vector<std::uint8_t>{1, 1, 1, 1});
    }
    SECTION("exploration complements the whole mask") {
        const auto rec = select_neighbors(obs, {0.4, 0.3, 0.2, 0.1}, 1.0, rng);
        REQUIRE(rec.explored);
        REQUIRE(rec.kept == std::vector<std::uint8_t>{0, 0, 1, 1});
    }
    SECTION("an all-false mask falls back to the argmax position") {
        // uniform probabilities + forced complement would empty the mask
        const auto rec = select_neighbors(obs, {0.25, 0.25, 0.25, 0.25}, 1.0, rng);
        REQUIRE(rec.explored);
        REQUIRE(rec.kept == std::vector<std::uint8_t>{1, 0, 0, 0});
    }
    SECTION("epsilon outside [0,1] is rejected") {
        REQUIRE_THROWS_AS(select_neighbors(obs, {0.5, 0.5}, -0.1, rng),
                          std::invalid_argument);
    }
}

TEST_CASE("topology rows map kept positions back to neighbor ids") {
    AgentObservation obs;
    obs.neighbor_ids = {5, 2, 7};
    ActionRecord rec;
    rec.kept = {1, 0, 1};
    CommTopology topo(9);
    apply_action_to_topology(obs, rec, 4, topo);
    REQUIRE(topo.row(4) == std::vector<int>{5, 7});
}

TEST_CASE("dual reward arithmetic") {
    ScenarioConfig cfg = obs_config(2.0);
    RewardParams rp; // xi_l = 0.25, xi_g = 0.5

    auto transition = [&](double x0, double x1, double expert_at) {
        WorldState w0 = obs_world(expert_at, {x0});
        WorldState w1 = obs_world(expert_at, {x1});
        w1.step = 1;
        return std::pair{w0, w1};
    };

    SECTION("progress branch: d(k)=1.0, d(k+1)=0.5 gives 0.5") {
        RewardParams local_only = rp;
        local_only.use_global = false;
        auto [w0, w1] = transition(1.0, 1.5, 2.0); // local goal 2: d0=1, d1=0.5
        REQUIRE(compute_reward(0, w0, w1, cfg, local_only) == Catch::Approx(0.5));
    }
    SECTION("stability branch penalizes leaving the band") {
        RewardParams local_only = rp;
        local_only.use_global = false;
        auto [w0, w1] = transition(1.9, 1.7, 2.0); // d0=0.1 < xi_l, d1=0.3
        REQUIRE(compute_reward(0, w0, w1, cfg, local_only) == Catch::Approx(-0.2));
    }
    SECTION("resting exactly at both goals earns 1 + 1") {
        auto [w0, w1] = transition(2.0, 2.0, 2.0);
        REQUIRE(compute_reward(0, w0, w1, cfg, rp) == Catch::Approx(2.0));
    }
    SECTION("the local goal is frozen at step k") {
        // expert moves between k and k+1; the reward must use the expert
        // position of step k for both distances
        WorldState w0 = obs_world(2.0, {1.0});
        WorldState w1 = obs_world(2.6, {1.5});
        w1.step = 1;
        RewardParams local_only = rp;
        local_only.use_global = false;
        // frozen goal 2: d0=1, d1=0.5 -> 0.5 (not (1-1.1)/1 with the moved goal)
        REQUIRE(compute_reward(0, w0, w1, cfg, local_only) == Catch::Approx(0.5));
    }
}

TEST_CASE("reward branches agree at the threshold") {
    // both branch formulas coincide at d(k) = xi, so the reward is continuous
    // in d(k) there; probe a shrinking bracket numerically
    RewardParams rp;
    for (double xi : {0.25, 0.5}) {
        for (double d1 : {0.0, 0.1, 0.4, 1.0}) {
            auto branch1 = [&](double d0) { return (d0 - d1) / d0; };
            auto branch2 = [&](double) { return (xi - d1) / xi; };
            for (double delta : {1e-4, 1e-6, 1e-9})
                REQUIRE(std::abs(branch1(xi + delta) - branch2(xi - delta)) <
                        1e-2 * delta / 1e-4 + 1e-8);
        }
    }
}

TEST_CASE("progress reward is nonnegative exactly when the agent moved closer") {
    Rng rng(55);
    ScenarioConfig cfg = obs_config(2.0);
    RewardParams local_only;
    local_only.use_global = false;
    for (int trial = 0; trial < 500; ++trial) {
        const double x0 = rng.uniform(-5, 5);
        const double x1 = rng.uniform(-5, 5);
        const double d0 = std::abs(x0 - 2.0);
        if (d0 < local_only.xi_local) continue; // progress branch only
        WorldState w0 = obs_world(2.0, {x0});
        WorldState w1 = obs_world(2.0, {x1});
        const double g1 = compute_reward(0, w0, w1, cfg, local_only);
        REQUIRE((g1 >= 0) == (std::abs(x1 - 2.0) <= d0));
    }
}

TEST_CASE("epsilon schedule is a triangular wave") {
    REQUIRE(epsilon_schedule(0, 0.2, 50) == 0.0);
    REQUIRE(epsilon_schedule(25, 0.2, 50) == Catch::Approx(0.2));
    REQUIRE(epsilon_schedule(50, 0.2, 50) == 0.0);
    REQUIRE(epsilon_schedule(10, 0.2, 50) == Catch::Approx(0.08));
    REQUIRE(epsilon_schedule(60, 0.2, 50) == epsilon_schedule(10, 0.2, 50));
    REQUIRE_THROWS_AS(epsilon_schedule(1, 0.2, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(epsilon_schedule(-1, 0.2, 50), std::invalid_argument);
}

namespace {
ScenarioConfig rollout_config() {
    ScenarioConfig cfg;
    cfg.x_min = 0;
    cfg.x_max = 4;
    cfg.m_nonexperts = 12;
    cfg.n_experts = 1;
    cfg.expert_init_opinions = {2.0};
    cfg.global_goal = 2.0;
    cfg.p = 0;
    cfg.q = 1;
    cfg.max_steps = 20;
    return cfg;
}
} // namespace

TEST_CASE("rollout terminates immediately on a consensus world") {
    ScenarioConfig cfg = rollout_config();
    cfg.init_mode = InitMode::ExplicitIntervals;
    cfg.init_intervals = {{2.0, 2.0, 12}};
    Rng rng(1);
    const WorldState w0 = init_world(cfg, rng);
    Architecture arch;
    arch.hidden_dim = 6;
    arch.hidden_layers = 1;
    const auto params = init_params(arch, rng);
    const auto trace = rollout_episode(w0, PackedPolicy(params), 0.0, cfg, RewardParams{}, rng);
    REQUIRE(trace.horizon == 0);
    REQUIRE(trace.cause == TerminationCause::Consensus);
    for (const auto& list : trace.per_agent) REQUIRE(list.empty());
}

TEST_CASE("rollout respects the horizon, marks exploration, and stays legal") {
    const ScenarioConfig cfg = rollout_config();
    Architecture arch;
    arch.hidden_dim = 8;
    arch.hidden_layers = 1;
    Rng rng(3);
    const auto params = init_params(arch, rng);
    const WorldState w0 = init_world(cfg, rng);

    Trajectory traj;
    auto rng2 = Rng(41);
    const auto trace =
        rollout_episode(w0, PackedPolicy(params), 1.0, cfg, RewardParams{}, rng2, &traj);

    REQUIRE(trace.horizon <= cfg.max_steps);
    REQUIRE(static_cast<int>(traj.nonexpert_rows.size()) == trace.horizon + 1);
    if (trace.cause == TerminationCause::Consensus)
        REQUIRE(consensus_reached(trace.terminal.nonexpert_opinions(), cfg.omega));

    for (int i = 0; i < static_cast<int>(trace.per_agent.size()); ++i) {
        for (const auto& rec : trace.per_agent[i]) {
            REQUIRE(rec.action.explored); // eps = 1 complements every step
            // pruning-only: every kept channel lies strictly inside r_c at
            // the step it was selected, and never points at the agent itself
            const auto& ops = traj.nonexpert_rows[rec.step];
            for (std::size_t pos = 0; pos < rec.action.kept.size(); ++pos) {
                if (!rec.action.kept[pos]) continue;
                const int j = rec.obs.neighbor_ids[pos];
                REQUIRE(j != i);
                REQUIRE(std::abs(ops[i] - ops[j]) < cfg.r_c);
            }
        }
    }
}

TEST_CASE("rollout is deterministic under a fixed seed") {
    const ScenarioConfig cfg = rollout_config();
    Architecture arch;
    arch.hidden_dim = 8;
    arch.hidden_layers = 1;
    Rng init_rng(5);
    const auto params = init_params(arch, init_rng);
    const WorldState w0 = init_world(cfg, init_rng);

    auto run = [&] {
        Rng rng(123);
        return rollout_episode(w0, PackedPolicy(params), 0.3, cfg, RewardParams{}, rng);
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.horizon == b.horizon);
    for (std::size_t i = 0; i < a.per_agent.size(); ++i) {
        REQUIRE(a.per_agent[i].size() == b.per_agent[i].size());
        for (std::size_t k = 0; k < a.per_agent[i].size(); ++k) {
            REQUIRE(a.per_agent[i][k].reward == b.per_agent[i][k].reward);
            REQUIRE(a.per_agent[i][k].action.kept == b.per_agent[i][k].action.kept);
        }
    }
}

TEST_CASE("policy gradient follows the returns") {
    const ScenarioConfig cfg = rollout_config();
    Architecture arch;
    arch.hidden_dim = 6;
    arch.hidden_layers = 1;
    Rng rng(9);
    const auto params = init_params(arch, rng);
    const WorldState w0 = init_world(cfg, rng);
    auto trace = rollout_episode(w0, PackedPolicy(params), 0.2, cfg, RewardParams{}, rng);
    REQUIRE(trace.horizon > 0);

    SECTION("zero returns leave the parameters untouched") {
        auto zeroed = trace;
        for (auto& list : zeroed.per_agent)
            for (auto& rec : list) rec.reward = 0.0;
        const auto updated = reinforce_update(params, zeroed, 1e-3);
        REQUIRE(updated.flat == params.flat);
    }
    SECTION("doubling every reward doubles the gradient") {
        const auto g1 = policy_gradient(params, trace);
        auto doubled = trace;
        for (auto& list : doubled.per_agent)
            for (auto& rec : list) rec.reward *= 2.0;
        const auto g2 = policy_gradient(params, doubled);
        for (std::size_t k = 0; k < g1.flat.size(); ++k)
            REQUIRE(g2.flat[k] == Catch::Approx(2.0 * g1.flat[k]).margin(1e-14));
    }
    SECTION("excluding explored steps drops their contribution") {
        GradientOptions opts;
        opts.exclude_explored_steps = true;
        auto only_explored = trace;
        bool has_explored = false;
        for (auto& list : only_explored.per_agent)
            for (auto& rec : list) has_explored = has_explored || rec.action.explored;
        if (has_explored) {
            const auto g_all = policy_gradient(params, trace);
            const auto g_filtered = policy_gradient(params, trace, opts);
            REQUIRE(g_all.flat != g_filtered.flat);
        }
    }
}

TEST_CASE("single-step gradient matches the analytic log-prob gradient") {
    // one agent, one step, two neighbors: the REINFORCE gradient must equal
    // (R / m) * grad log pi(kept | obs)
    Architecture arch;
    arch.hidden_dim = 4;
    arch.hidden_layers = 1;
    Rng rng(17);
    const auto params = init_params(arch, rng);

    AgentObservation obs;
    obs.neighbor_ids = {1, 2};
    obs.local_ratios = {0.5, 1.5};
    obs.global_ratios = {0.8, 1.2};
    obs.d_local = 0.4;
    obs.d_global = 0.7;

    const auto probs = forward(params, to_sequence(obs));
    ActionRecord rec;
    rec.probs = probs;
    rec.threshold = 0.5;
    rec.kept = {1, 0};
    rec.explored = false;

    EpisodeTrace trace;
    trace.per_agent.resize(3); // m = 3
    StepRecord sr;
    sr.step = 0;
    sr.obs = obs;
    sr.action = rec;
    sr.reward = 2.5;
    trace.per_agent[0].push_back(sr);
    trace.horizon = 1;

    const auto grad = policy_gradient(params, trace);
    const auto [lp, logp_grad] = logprob_and_grad(params, to_sequence(obs), rec.kept);
    (void)lp;
    for (std::size_t k = 0; k < grad.flat.size(); ++k)
        REQUIRE(grad.flat[k] == Catch::Approx(2.5 / 3.0 * logp_grad.flat[k]).margin(1e-12));

    // and the analytic gradient itself agrees with finite differences
    const auto fd = finite_diff_grad(
        params,
        [&](const PolicyParams& p) {
            return action_logprob(forward(p, to_sequence(obs)), rec.kept,
                                  ActionLogProbMode::SumKept);
        },
        1e-5);
    for (std::size_t k = 0; k < fd.flat.size(); ++k)
        REQUIRE(logp_grad.flat[k] == Catch::Approx(fd.flat[k]).margin(1e-6));
}

TEST_CASE("training is deterministic and runs one episode per round") {
    TrainConfig tc;
    tc.scenario = rollout_config();
    tc.scenario.m_nonexperts = 6;
    tc.scenario.max_steps = 6;
    tc.arch.hidden_dim = 5;
    tc.arch.hidden_layers = 1;
    tc.rounds = 3;

    auto run = [&](unsigned threads) {
        thread_override().store(threads);
        Rng rng(2718);
        auto res = train(tc, rng);
        thread_override().store(0);
        return res;
    };
    const auto a = run(1);
    const auto b = run(1);
    REQUIRE(a.params.flat == b.params.flat);
    REQUIRE(a.mean_returns == b.mean_returns);
    REQUIRE(a.mean_returns.size() == 3);
    REQUIRE(a.epsilons[0] == 0.0);

    SECTION("results do not depend on the worker count") {
        const auto c = run(2);
        REQUIRE(a.params.flat == c.params.flat);
        REQUIRE(a.mean_returns == c.mean_returns);
    }
    SECTION("one round equals rollout plus update") {
        TrainConfig one = tc;
        one.rounds = 1;
        Rng rng(2718);
        const auto res = train(one, rng);

        Rng manual_rng(2718);
        auto params = init_params(one.arch, manual_rng);
        WorldState w0 = init_world(one.scenario, manual_rng);
        const auto trace =
            rollout_episode(w0, PackedPolicy(params), 0.0, one.scenario, one.reward,
                            manual_rng, nullptr, !one.full_horizon_rollouts);
        const auto expect = reinforce_update(params, trace, one.learning_rate);
        REQUIRE(res.params.flat == expect.flat);
    }
}
