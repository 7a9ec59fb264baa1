#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "neifi/acp.hpp"
#include "neifi/config.hpp"
#include "neifi/dynamics.hpp"
#include "neifi/metrics.hpp"
#include "neifi/rng.hpp"
#include "neifi/topology.hpp"
#include "neifi/world.hpp"

namespace neifi {

/// The three comparison strategies and their published parameters.
struct BaselineKind {
    enum class Kind { PWA, GP, CNR } kind = Kind::PWA;
    double gp_pressure_level = 0.5;    ///< lambda
    double gp_pressured_fraction = 0.5;
    int cnr_long_range_count = 1;
    double cnr_preference = 0.0;       ///< 0 = uniform choice of long-range partners
    bool gp_pressure_pre_blend = false; ///< apply pressure inside the stubbornness blend
    bool cnr_symmetric = false;         ///< make added channels mutual

    void validate() const {
        if (gp_pressure_level < 0.0 || gp_pressure_level > 1.0)
            config_error("gp_pressure_level", "must be in [0,1]");
        if (gp_pressured_fraction < 0.0 || gp_pressured_fraction > 1.0)
            config_error("gp_pressured_fraction", "must be in [0,1]");
        if (cnr_long_range_count < 0) config_error("cnr_long_range_count", "must be >= 0");
        if (cnr_preference < 0.0) config_error("cnr_preference", "must be >= 0");
    }
};

namespace detail {

/// Weights over the neighborhood of agent i, decreasing in distance to the
/// population mean; the 0.1 floor keeps them bounded. Normalized to sum 1.
inline std::vector<double> pwa_weights(const WorldState& w, const std::vector<int>& nbrs,
                                       double population_mean) {
    std::vector<double> weights(nbrs.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
        weights[k] = 1.0 / (0.1 + std::abs(w.nonexperts[nbrs[k]].opinion - population_mean));
        sum += weights[k];
    }
    for (auto& wt : weights) wt /= sum;
    return weights;
}

/// Mean over the non-expert population. Experts sit in their own layer and
/// reach non-experts only through the local-goal term, so with p=0 the
/// wrapped baselines reduce exactly to their expert-free form.
inline double population_mean(const WorldState& w) {
    double sum = 0.0;
    for (const auto& v : w.nonexperts) sum += v.opinion;
    return sum / w.m();
}

/// Pressure target of GP: the agent's subgroup (experts and followers) when
/// experts actually exert influence, otherwise the plain non-expert mean.
inline double gp_target(const WorldState& w, const ScenarioConfig& cfg, int i) {
    if (w.n() > 0 && cfg.p > 0.0) {
        const int g = w.partition.nonexpert_group[i];
        double sum = 0.0;
        int cnt = 0;
        for (const auto& e : w.experts)
            if (w.partition.expert_group[e.id] == g) {
                sum += e.opinion;
                ++cnt;
            }
        for (const auto& v : w.nonexperts)
            if (w.partition.nonexpert_group[v.id] == g) {
                sum += v.opinion;
                ++cnt;
            }
        return sum / cnt;
    }
    double sum = 0.0;
    for (const auto& v : w.nonexperts) sum += v.opinion;
    return sum / w.m();
}

} // namespace detail

/// Position Weight Allocation: the plain dynamics with the uniform neighbor
/// mean replaced by a mean weighted toward the population average.
inline std::vector<double> pwa_step(const WorldState& w, const ScenarioConfig& cfg) {
    const double xbar = detail::population_mean(w);
    std::vector<double> next(w.nonexperts.size());
    for (const auto& v : w.nonexperts) {
        const auto nbrs = neighbor_set(w, cfg, v.id);
        if (nbrs.empty()) {
            next[v.id] = v.opinion;
            continue;
        }
        const auto weights = detail::pwa_weights(w, nbrs, xbar);
        double term = 0.0;
        for (std::size_t k = 0; k < nbrs.size(); ++k)
            term += weights[k] * w.nonexperts[nbrs[k]].opinion;
        next[v.id] = detail::blend_update(w, cfg, v.id, term);
    }
    return next;
}

/// The pressured half of the population, drawn once per episode.
inline std::vector<int> gp_draw_pressured(int m, double fraction, Rng& rng) {
    const int count = static_cast<int>(std::lround(fraction * m));
    std::vector<int> ids(m);
    for (int i = 0; i < m; ++i) ids[i] = i;
    rng.shuffle(ids);
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Group Pressure: unpressured agents follow the plain dynamics over the full
/// neighborhood; pressured agents are pulled toward their group mean with
/// weight lambda (after the stubbornness blend by default).
inline std::vector<double> gp_step(const WorldState& w, const ScenarioConfig& cfg,
                                   const BaselineKind& bk, const std::vector<int>& pressured) {
    std::vector<double> next(w.nonexperts.size());
    const double lambda = bk.gp_pressure_level;
    for (const auto& v : w.nonexperts) {
        const auto nbrs = neighbor_set(w, cfg, v.id);
        const bool is_pressured =
            std::binary_search(pressured.begin(), pressured.end(), v.id);

        double base;
        if (nbrs.empty()) {
            base = v.opinion; // nothing received, so pre-blend pressure has no carrier
        } else {
            double sum = 0.0;
            for (int j : nbrs) sum += w.nonexperts[j].opinion;
            double term = sum / nbrs.size();
            if (is_pressured && bk.gp_pressure_pre_blend)
                term = (1.0 - lambda) * term + lambda * detail::gp_target(w, cfg, v.id);
            base = detail::blend_update(w, cfg, v.id, term);
        }

        if (is_pressured && !bk.gp_pressure_pre_blend)
            base = (1.0 - lambda) * base + lambda * detail::gp_target(w, cfg, v.id);
        next[v.id] = base;
    }
    return next;
}

/// Common-Neighbor: everyone keeps their full neighborhood plus up to
/// cnr_long_range_count agents sampled from outside the confidence radius.
/// This is the invasive comparator; its topology bypasses the pruning check.
inline CommTopology cnr_topology(const WorldState& w, const ScenarioConfig& cfg,
                                 const BaselineKind& bk, Rng& rng) {
    const int m = w.m();
    CommTopology topo(m);
    topo.long_range_allowed = true;
    for (int i = 0; i < m; ++i) {
        const auto nbrs = neighbor_set(w, cfg, i);
        for (int j : nbrs) topo.set(i, j, true);

        std::vector<int> outside;
        for (int j = 0; j < m; ++j)
            if (j != i && !topo.get(i, j)) outside.push_back(j);
        for (int add = 0; add < bk.cnr_long_range_count && !outside.empty(); ++add) {
            std::size_t pick;
            if (bk.cnr_preference == 0.0) {
                pick = rng.uniform_index(outside.size());
            } else {
                // Preference > 0 biases the draw toward closer opinions.
                std::vector<double> wts(outside.size());
                double sum = 0.0;
                const double xi = w.nonexperts[i].opinion;
                for (std::size_t k = 0; k < outside.size(); ++k) {
                    wts[k] = std::exp(-bk.cnr_preference *
                                      std::abs(w.nonexperts[outside[k]].opinion - xi));
                    sum += wts[k];
                }
                double u = rng.uniform01() * sum;
                pick = 0;
                while (pick + 1 < wts.size() && (u -= wts[pick]) > 0.0) ++pick;
            }
            topo.set(i, outside[pick], true);
            if (bk.cnr_symmetric) topo.set(outside[pick], i, true);
            outside.erase(outside.begin() + pick);
        }
    }
    return topo;
}

/// Result shell shared by the baseline runner and policy evaluation.
struct EpisodeResult {
    WorldState terminal;
    int steps = 0;
    TerminationCause cause = TerminationCause::Horizon;
};

/// Runs one full episode under a baseline strategy. With experts present this
/// is the hierarchical wrapper: experts evolve by their own promotion pattern
/// and subgroups merge exactly as in the learned method, while non-experts
/// follow the baseline rule inside the same p/q blend.
inline EpisodeResult run_baseline_episode(const WorldState& world0, const BaselineKind& bk,
                                          const ScenarioConfig& cfg, Rng& rng,
                                          Trajectory* trajectory = nullptr) {
    if (world0.step != 0)
        throw std::invalid_argument("run_baseline_episode: world must be at k=0");
    WorldState w = world0;
    if (trajectory) trajectory->record(w);

    std::vector<int> pressured;
    if (bk.kind == BaselineKind::Kind::GP)
        pressured = gp_draw_pressured(w.m(), bk.gp_pressured_fraction, rng);

    EpisodeResult result;
    while (true) {
        if (consensus_reached(metric_opinions(w, cfg), cfg.omega)) {
            result.cause = TerminationCause::Consensus;
            break;
        }
        if (w.step >= cfg.max_steps) {
            result.cause = TerminationCause::Horizon;
            break;
        }
        switch (bk.kind) {
            case BaselineKind::Kind::PWA:
                w = advance_world(w, pwa_step(w, cfg), cfg);
                break;
            case BaselineKind::Kind::GP:
                w = advance_world(w, gp_step(w, cfg, bk, pressured), cfg);
                break;
            case BaselineKind::Kind::CNR: {
                const CommTopology topo = cnr_topology(w, cfg, bk, rng);
                w = world_step(w, topo, cfg);
                break;
            }
        }
        if (trajectory) trajectory->record(w);
    }
    result.steps = w.step;
    result.terminal = std::move(w);
    return result;
}

} // namespace neifi
