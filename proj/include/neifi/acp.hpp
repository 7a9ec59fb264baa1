#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "neifi/config.hpp"
#include "neifi/dynamics.hpp"
#include "neifi/metrics.hpp"
#include "neifi/parallel.hpp"
#include "neifi/policy.hpp"
#include "neifi/rng.hpp"
#include "neifi/topology.hpp"
#include "neifi/world.hpp"

namespace neifi {

/// Dual-reward thresholds; the use_* switches exist for the reward ablation.
struct RewardParams {
    double xi_local = 0.25;
    double xi_global = 0.5;
    bool use_local = true;
    bool use_global = true;

    void validate() const {
        if (!(xi_local > 0)) config_error("xi_l", "must be > 0");
        if (!(xi_global > 0)) config_error("xi_g", "must be > 0");
        if (!use_local && !use_global)
            config_error("reward", "at least one reward component must be enabled");
    }
};

/// What one non-expert perceives in one step: distance ratios of its
/// neighbors to the local and global goals, its own (clamped) distances, and
/// the shuffled position -> neighbor-id map.
struct AgentObservation {
    std::vector<double> local_ratios;  ///< o, per shuffled position
    std::vector<double> global_ratios; ///< u, same permutation
    double d_local = 0.0;              ///< focal distance to the local goal, floored at 0.1
    double d_global = 0.0;             ///< focal distance to the global goal, floored at 0.1
    std::vector<int> neighbor_ids;     ///< position -> non-expert id

    int length() const { return static_cast<int>(neighbor_ids.size()); }
};

/// Distance floor applied to the focal agent's goal distances before they
/// become ratio denominators.
inline double clamp_distance(double d) { return d <= 0.1 ? 0.1 : d; }

/// Builds the observation of non-expert i from the current world. Both ratio
/// vectors share one random permutation so rows stay aligned. Callers must
/// skip isolated agents.
inline AgentObservation build_observation(const WorldState& w, const ScenarioConfig& cfg,
                                          int i, Rng& rng) {
    auto nbrs = neighbor_set(w, cfg, i);
    if (nbrs.empty()) throw std::invalid_argument("build_observation: empty neighborhood");

    const double xi = w.nonexperts[i].opinion;
    AgentObservation obs;
    obs.d_local = clamp_distance(std::abs(xi - local_goal(w, i)));
    obs.d_global = clamp_distance(std::abs(xi - cfg.global_goal));

    rng.shuffle(nbrs);
    obs.neighbor_ids = nbrs;
    obs.local_ratios.resize(nbrs.size());
    obs.global_ratios.resize(nbrs.size());
    for (std::size_t pos = 0; pos < nbrs.size(); ++pos) {
        const int j = nbrs[pos];
        const double xj = w.nonexperts[j].opinion;
        // Neighbor distances are taken to the neighbor's own goals, unclamped.
        obs.local_ratios[pos] = std::abs(xj - local_goal(w, j)) / obs.d_local;
        obs.global_ratios[pos] = std::abs(xj - cfg.global_goal) / obs.d_global;
    }
    return obs;
}

/// Network input rows (o_j, u_j, d^O, d^U), one per shuffled position.
inline SequenceSample to_sequence(const AgentObservation& obs) {
    SequenceSample seq;
    seq.dim = 4;
    seq.data.reserve(obs.neighbor_ids.size() * 4);
    for (std::size_t pos = 0; pos < obs.neighbor_ids.size(); ++pos) {
        seq.data.push_back(obs.local_ratios[pos]);
        seq.data.push_back(obs.global_ratios[pos]);
        seq.data.push_back(obs.d_local);
        seq.data.push_back(obs.d_global);
    }
    return seq;
}

/// Outcome of thresholding the policy output for one agent-step.
struct ActionRecord {
    std::vector<double> probs;      ///< per shuffled position
    double threshold = 0.0;         ///< mean probability
    std::vector<std::uint8_t> kept; ///< per shuffled position
    bool explored = false;          ///< whole mask was complemented
};

/// Mean-threshold pruning with epsilon-greedy inversion: keep positions with
/// probability >= the mean, complement the whole mask with probability eps,
/// and fall back to the argmax position if nothing survives.
inline ActionRecord select_neighbors(const AgentObservation& obs,
                                     const std::vector<double>& probs, double eps, Rng& rng) {
    if (probs.size() != obs.neighbor_ids.size())
        throw std::invalid_argument("select_neighbors: probability count mismatch");
    if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("select_neighbors: eps outside [0,1]");

    ActionRecord rec;
    rec.probs = probs;
    rec.threshold = std::accumulate(probs.begin(), probs.end(), 0.0) /
                    static_cast<double>(probs.size());
    rec.explored = eps > 0.0 && rng.bernoulli(eps);
    rec.kept.resize(probs.size());
    bool any = false;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        const bool base = probs[j] >= rec.threshold;
        const bool keep = base != rec.explored;
        rec.kept[j] = keep ? 1 : 0;
        any = any || keep;
    }
    if (!any) {
        const std::size_t best =
            std::max_element(probs.begin(), probs.end()) - probs.begin();
        rec.kept[best] = 1;
    }
    return rec;
}

/// Writes the kept positions of agent i into its topology row, mapping
/// shuffled positions back to neighbor ids.
inline void apply_action_to_topology(const AgentObservation& obs, const ActionRecord& rec,
                                     int i, CommTopology& topo) {
    for (std::size_t pos = 0; pos < rec.kept.size(); ++pos)
        if (rec.kept[pos]) topo.set(i, obs.neighbor_ids[pos], true);
}

/// Dual reward for agent i over the transition world_k -> world_k1. Both
/// distances are measured against the goals as of step k, so the reward
/// reflects the agent's own movement rather than expert drift.
inline double compute_reward(int i, const WorldState& world_k, const WorldState& world_k1,
                             const ScenarioConfig& cfg, const RewardParams& rp) {
    const double local = world_k.n() > 0 ? local_goal(world_k, i) : cfg.global_goal;
    const double x0 = world_k.nonexperts[i].opinion;
    const double x1 = world_k1.nonexperts[i].opinion;

    auto band_reward = [](double d0, double d1, double xi) {
        // Outside the band: reward proportional progress toward the goal.
        // Inside: reward staying within the band, penalize leaving it.
        if (d0 >= xi) return (d0 - d1) / d0;
        return (xi - d1) / xi;
    };

    double r = 0.0;
    if (rp.use_local)
        r += band_reward(std::abs(x0 - local), std::abs(x1 - local), rp.xi_local);
    if (rp.use_global)
        r += band_reward(std::abs(x0 - cfg.global_goal), std::abs(x1 - cfg.global_goal),
                         rp.xi_global);
    return r;
}

/// Periodic triangular exploration schedule: 0 at the start of each period,
/// eps_max at its midpoint.
inline double epsilon_schedule(int round, double eps_max, int period) {
    if (round < 0) throw std::invalid_argument("epsilon_schedule: negative round");
    if (period <= 0) throw std::invalid_argument("epsilon_schedule: period must be > 0");
    const double frac = static_cast<double>(round % period) / static_cast<double>(period);
    return eps_max * (1.0 - std::abs(2.0 * frac - 1.0));
}

struct StepRecord {
    int step = 0;
    AgentObservation obs;
    ActionRecord action;
    double reward = 0.0;
};

/// Everything one episode produced: per-agent records (isolated steps leave
/// no record), the horizon actually played, and the terminal world.
struct EpisodeTrace {
    std::vector<std::vector<StepRecord>> per_agent;
    int horizon = 0;
    WorldState terminal;
    TerminationCause cause = TerminationCause::Horizon;

    std::vector<double> returns() const {
        std::vector<double> out(per_agent.size(), 0.0);
        for (std::size_t i = 0; i < per_agent.size(); ++i)
            for (const auto& rec : per_agent[i]) out[i] += rec.reward;
        return out;
    }
};

/// Opinion history of one episode, row per recorded step (including the
/// initial state), used for trajectory plots.
struct Trajectory {
    std::vector<std::vector<double>> nonexpert_rows;
    std::vector<std::vector<double>> expert_rows;

    void record(const WorldState& w) {
        nonexpert_rows.push_back(w.nonexpert_opinions());
        expert_rows.push_back(w.expert_opinions());
    }
};

/// Plays one episode under the given policy. Per step: observations for all
/// non-isolated agents (consuming randomness in agent order), batched policy
/// forwards (pure, parallel), epsilon-greedy selection (agent order again),
/// then one synchronous world step and per-agent rewards against the frozen
/// pre-step goals. Stops at consensus or the horizon; training passes
/// stop_at_consensus=false to always play out the full horizon (otherwise
/// ending the episode early cuts off the stability rewards and the learned
/// optimum becomes delaying consensus rather than reaching it).
inline EpisodeTrace rollout_episode(const WorldState& world0, const PackedPolicy& policy,
                                    double eps, const ScenarioConfig& cfg,
                                    const RewardParams& rp, Rng& rng,
                                    Trajectory* trajectory = nullptr,
                                    bool stop_at_consensus = true) {
    if (world0.step != 0) throw std::invalid_argument("rollout_episode: world must be at k=0");
    if (world0.n() == 0)
        throw std::invalid_argument(
            "rollout_episode: needs at least one (possibly virtual) expert for local goals");

    const int m = world0.m();
    EpisodeTrace trace;
    trace.per_agent.resize(m);
    WorldState w = world0;
    if (trajectory) trajectory->record(w);

    std::vector<AgentObservation> obs(m);
    std::vector<SequenceSample> seqs(m);
    std::vector<std::vector<double>> probs(m);
    std::vector<std::uint8_t> active(m);

    while (true) {
        if (stop_at_consensus && consensus_reached(metric_opinions(w, cfg), cfg.omega)) {
            trace.cause = TerminationCause::Consensus;
            break;
        }
        if (w.step >= cfg.max_steps) {
            trace.cause = consensus_reached(metric_opinions(w, cfg), cfg.omega)
                              ? TerminationCause::Consensus
                              : TerminationCause::Horizon;
            break;
        }

        for (int i = 0; i < m; ++i) {
            const auto nbrs = neighbor_set(w, cfg, i);
            active[i] = nbrs.empty() ? 0 : 1;
            if (active[i]) {
                obs[i] = build_observation(w, cfg, i, rng);
                seqs[i] = to_sequence(obs[i]);
            }
        }
        parallel_for(static_cast<std::size_t>(m), [&](std::size_t i) {
            if (active[i]) probs[i] = forward(policy, seqs[i]);
        });

        CommTopology topo(m);
        for (int i = 0; i < m; ++i) {
            if (!active[i]) continue; // isolated agents keep an all-zero row
            const ActionRecord rec = select_neighbors(obs[i], probs[i], eps, rng);
            apply_action_to_topology(obs[i], rec, i, topo);
            StepRecord sr;
            sr.step = w.step;
            sr.obs = obs[i];
            sr.action = rec;
            trace.per_agent[i].push_back(std::move(sr));
        }

        const WorldState w1 = world_step(w, topo, cfg);
        for (int i = 0; i < m; ++i)
            if (active[i])
                trace.per_agent[i].back().reward = compute_reward(i, w, w1, cfg, rp);

        w = w1;
        if (trajectory) trajectory->record(w);
    }

    trace.horizon = w.step;
    trace.terminal = std::move(w);
    return trace;
}

/// REINFORCE options beyond the learning rate.
struct GradientOptions {
    ActionLogProbMode logprob_mode = ActionLogProbMode::SumKept;
    bool exclude_explored_steps = false;
};

/// (1/m) * sum_i R(tau_i) * sum_k grad log pi(A_i(k) | S_i(k)). Per-agent
/// buffers are accumulated in parallel and merged in agent order.
inline GradientBuffer policy_gradient(const PolicyParams& params, const EpisodeTrace& trace,
                                      const GradientOptions& opts = {}) {
    const std::size_t m = trace.per_agent.size();
    if (m == 0) throw std::invalid_argument("policy_gradient: empty trace");
    const PackedPolicy packed(params);
    const std::vector<double> rets = trace.returns();

    std::vector<GradientBuffer> per_agent(m);
    parallel_for(m, [&](std::size_t i) {
        if (trace.per_agent[i].empty()) return;
        GradientBuffer acc = GradientBuffer::zeros_like(params);
        for (const auto& rec : trace.per_agent[i]) {
            if (opts.exclude_explored_steps && rec.action.explored) continue;
            logprob_and_grad_into(packed, to_sequence(rec.obs), rec.action.kept,
                                  opts.logprob_mode, acc);
        }
        per_agent[i] = std::move(acc);
    });

    GradientBuffer total = GradientBuffer::zeros_like(params);
    for (std::size_t i = 0; i < m; ++i) {
        if (per_agent[i].flat.empty()) continue;
        total.add(per_agent[i], rets[i] / static_cast<double>(m));
    }
    total.samples = 1;
    return total;
}

/// One gradient-ascent step from a full episode trace.
inline PolicyParams reinforce_update(const PolicyParams& params, const EpisodeTrace& trace,
                                     double alpha, const GradientOptions& opts = {}) {
    return apply_update(params, policy_gradient(params, trace, opts), alpha);
}

/// Training run description: scenario, network, schedule and optimizer.
struct TrainConfig {
    int rounds = 300;            ///< M
    double learning_rate = 1e-4; ///< alpha
    double eps_max = 0.2;
    int eps_period = 50;
    RewardParams reward;
    ScenarioConfig scenario;
    Architecture arch;
    ActionLogProbMode logprob_mode = ActionLogProbMode::SumKept;
    bool exclude_explored_steps = false;
    /// Play training episodes to the full horizon instead of stopping at the
    /// consensus threshold. Early stopping couples the return to the episode
    /// length, which rewards policies for postponing consensus.
    bool full_horizon_rollouts = true;

    void validate() const {
        if (rounds < 1) config_error("M", "must be >= 1");
        if (!(learning_rate > 0)) config_error("alpha", "must be > 0");
        if (eps_max < 0.0 || eps_max > 1.0) config_error("eps_max", "must be in [0,1]");
        if (eps_period < 1) config_error("eps_period", "must be >= 1");
        reward.validate();
        scenario.validate();
        arch.validate();
    }
};

struct TrainResult {
    PolicyParams params;
    std::vector<double> mean_returns; ///< one entry per round
    std::vector<double> epsilons;
};

/// Full REINFORCE training: each round plays one fresh episode under the
/// periodic exploration schedule and applies one policy update. Deterministic
/// under the rng seed.
inline TrainResult train(const TrainConfig& tc, Rng& rng) {
    tc.validate();
    GradientOptions opts{tc.logprob_mode, tc.exclude_explored_steps};

    TrainResult result;
    result.params = init_params(tc.arch, rng);
    result.mean_returns.reserve(tc.rounds);
    for (int round = 0; round < tc.rounds; ++round) {
        const double eps = epsilon_schedule(round, tc.eps_max, tc.eps_period);
        WorldState w0 = init_world(tc.scenario, rng);
        const PackedPolicy packed(result.params);
        const EpisodeTrace trace =
            rollout_episode(w0, packed, eps, tc.scenario, tc.reward, rng, nullptr,
                            !tc.full_horizon_rollouts);
        const auto rets = trace.returns();
        result.mean_returns.push_back(
            std::accumulate(rets.begin(), rets.end(), 0.0) / rets.size());
        result.epsilons.push_back(eps);
        result.params = apply_update(result.params, policy_gradient(result.params, trace, opts),
                                     tc.learning_rate);
    }
    return result;
}

} // namespace neifi
