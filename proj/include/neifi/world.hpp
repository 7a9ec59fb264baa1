#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "neifi/config.hpp"
#include "neifi/rng.hpp"

namespace neifi {

struct ExpertState {
    int id = 0;
    double opinion = 0.0;
    double stubbornness = 0.0; ///< fixed for the whole run
};

struct NonExpertState {
    int id = 0;
    double opinion = 0.0;
    double stubbornness = 0.0; ///< fixed for the whole run
};

/// Expert subgroups plus the follow relation. A non-expert follows exactly the
/// expert set of its group, so both sides are stored as group ids and the
/// follow sets are derived views.
struct SubgroupPartition {
    std::vector<int> expert_group;    ///< expert id -> group id
    std::vector<int> nonexpert_group; ///< non-expert id -> group id
    int group_count = 0;

    std::vector<int> experts_in_group(int g) const {
        std::vector<int> out;
        for (int e = 0; e < static_cast<int>(expert_group.size()); ++e)
            if (expert_group[e] == g) out.push_back(e);
        return out;
    }

    /// LE of non-expert v: the experts of its group, ascending ids.
    std::vector<int> followed_experts(int v) const {
        return experts_in_group(nonexpert_group.at(v));
    }
};

struct WorldState {
    int step = 0; ///< k
    std::vector<ExpertState> experts;
    std::vector<NonExpertState> nonexperts;
    SubgroupPartition partition;

    int n() const { return static_cast<int>(experts.size()); }
    int m() const { return static_cast<int>(nonexperts.size()); }

    std::vector<double> nonexpert_opinions() const {
        std::vector<double> v(nonexperts.size());
        for (std::size_t i = 0; i < nonexperts.size(); ++i) v[i] = nonexperts[i].opinion;
        return v;
    }
    std::vector<double> expert_opinions() const {
        std::vector<double> v(experts.size());
        for (std::size_t i = 0; i < experts.size(); ++i) v[i] = experts[i].opinion;
        return v;
    }

    /// Mean expert opinion of group g. Groups are nonempty whenever n > 0.
    double group_expert_mean(int g) const {
        double sum = 0.0;
        int cnt = 0;
        for (const auto& e : experts)
            if (partition.expert_group[e.id] == g) {
                sum += e.opinion;
                ++cnt;
            }
        if (cnt == 0) throw std::logic_error("group_expert_mean: empty expert group");
        return sum / cnt;
    }
};

/// Builds the initial world: opinions per init_mode, stubbornness drawn from
/// the configured intervals, one subgroup per expert, and every non-expert
/// attached to the expert nearest its opinion (ties to the lower index).
///
/// Draw order (pinned for reproducibility): expert opinions (when not
/// explicit), expert stubbornness, non-expert opinions, non-expert
/// stubbornness.
inline WorldState init_world(const ScenarioConfig& cfg, Rng& rng) {
    cfg.validate();

    WorldState w;
    w.step = 0;
    w.experts.resize(cfg.n_experts);
    w.nonexperts.resize(cfg.m_nonexperts);

    for (int e = 0; e < cfg.n_experts; ++e) {
        w.experts[e].id = e;
        w.experts[e].opinion = cfg.expert_init_opinions.empty()
                                   ? rng.uniform(cfg.x_min, cfg.x_max)
                                   : cfg.expert_init_opinions[e];
    }
    for (int e = 0; e < cfg.n_experts; ++e)
        w.experts[e].stubbornness = rng.uniform(cfg.phi_expert_min, cfg.phi_expert_max);

    if (cfg.init_mode == InitMode::Uniform) {
        for (int v = 0; v < cfg.m_nonexperts; ++v) {
            w.nonexperts[v].id = v;
            w.nonexperts[v].opinion = rng.uniform(cfg.x_min, cfg.x_max);
        }
    } else {
        int v = 0;
        for (const auto& iv : cfg.init_intervals)
            for (int c = 0; c < iv.count; ++c, ++v) {
                w.nonexperts[v].id = v;
                w.nonexperts[v].opinion = iv.lo == iv.hi ? iv.lo : rng.uniform(iv.lo, iv.hi);
            }
    }
    for (int v = 0; v < cfg.m_nonexperts; ++v)
        w.nonexperts[v].stubbornness = rng.uniform(cfg.phi_nonexpert_min, cfg.phi_nonexpert_max);

    // One group per expert; with no experts a single empty group holds everyone.
    auto& part = w.partition;
    part.expert_group.resize(cfg.n_experts);
    part.nonexpert_group.assign(cfg.m_nonexperts, 0);
    if (cfg.n_experts == 0) {
        part.group_count = 1;
        return w;
    }
    for (int e = 0; e < cfg.n_experts; ++e) part.expert_group[e] = e;
    part.group_count = cfg.n_experts;

    for (int v = 0; v < cfg.m_nonexperts; ++v) {
        int best = 0;
        double best_d = std::abs(w.nonexperts[v].opinion - w.experts[0].opinion);
        for (int e = 1; e < cfg.n_experts; ++e) {
            const double d = std::abs(w.nonexperts[v].opinion - w.experts[e].opinion);
            if (d < best_d) {
                best = e;
                best_d = d;
            }
        }
        part.nonexpert_group[v] = best;
    }
    return w;
}

} // namespace neifi
