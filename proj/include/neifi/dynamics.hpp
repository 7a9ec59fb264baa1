#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "neifi/config.hpp"
#include "neifi/topology.hpp"
#include "neifi/world.hpp"

namespace neifi {

/// Experts whose midpoint with e_i is at least as close to the goal as e_i
/// itself: { e_j : |(x_i + x_j)/2 - U| <= |x_i - U| }. The boundary is
/// included and so is e_i (its own midpoint is x_i); callers drop the self
/// entry before filtering.
inline std::vector<int> expert_candidates(const WorldState& w, const ScenarioConfig& cfg, int i) {
    const double xi = w.experts.at(i).opinion;
    const double base = std::abs(xi - cfg.global_goal);
    std::vector<int> out;
    for (const auto& e : w.experts)
        if (std::abs((xi + e.opinion) / 2.0 - cfg.global_goal) <= base) out.push_back(e.id);
    return out;
}

/// Greedy nearest-first selection of the experts e_i will actually average
/// with. Candidates join in ascending |x_j - x_i| order (ties to the lower
/// id); after each addition the tentative stubbornness update is evaluated
/// and the loop stops once |x'(k+1) - x(k)| >= mu (keeping the last addition)
/// or the candidates run out. StopBeforeCrossing instead drops the addition
/// that crossed the threshold.
inline std::vector<int> expert_filtered_set(const WorldState& w, const ScenarioConfig& cfg,
                                            int i, std::vector<int> candidates) {
    const double xi = w.experts.at(i).opinion;
    const double phi = w.experts[i].stubbornness;
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const double da = std::abs(w.experts[a].opinion - xi);
        const double db = std::abs(w.experts[b].opinion - xi);
        return da != db ? da < db : a < b;
    });

    std::vector<int> chosen;
    double sum = 0.0;
    for (int j : candidates) {
        chosen.push_back(j);
        sum += w.experts[j].opinion;
        const double tentative = phi * xi + (1.0 - phi) * (sum / chosen.size());
        if (std::abs(tentative - xi) >= cfg.mu) {
            if (cfg.pcp_mu_mode == PcpMuMode::StopBeforeCrossing) {
                chosen.pop_back();
            }
            break;
        }
    }
    return chosen;
}

/// One synchronous expert update: x' = phi*x + (1-phi)*mean(filtered set),
/// opinion unchanged when the filtered set is empty. Returns the new opinions
/// without mutating the world.
inline std::vector<double> expert_step(const WorldState& w, const ScenarioConfig& cfg) {
    std::vector<double> next(w.experts.size());
    for (const auto& e : w.experts) {
        auto cands = expert_candidates(w, cfg, e.id);
        std::erase(cands, e.id);
        const auto chosen = expert_filtered_set(w, cfg, e.id, std::move(cands));
        if (chosen.empty()) {
            next[e.id] = e.opinion;
            continue;
        }
        double sum = 0.0;
        for (int j : chosen) sum += w.experts[j].opinion;
        next[e.id] = e.stubbornness * e.opinion +
                     (1.0 - e.stubbornness) * (sum / chosen.size());
    }
    return next;
}

/// Merges subgroups until no two group means differ by <= beta, always
/// collapsing the currently closest pair first. Followers of merged groups
/// unite; group ids are renumbered by their smallest expert id.
inline SubgroupPartition merge_subgroups(const WorldState& w, const ScenarioConfig& cfg) {
    SubgroupPartition part = w.partition;
    if (w.n() == 0) return part;

    auto group_mean = [&](int g) {
        double sum = 0.0;
        int cnt = 0;
        for (const auto& e : w.experts)
            if (part.expert_group[e.id] == g) {
                sum += e.opinion;
                ++cnt;
            }
        return sum / cnt;
    };

    std::vector<int> groups;
    for (int e = 0; e < w.n(); ++e) groups.push_back(part.expert_group[e]);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());

    while (groups.size() > 1) {
        int ga = -1, gb = -1;
        double best = 0.0;
        for (std::size_t a = 0; a < groups.size(); ++a)
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                const double d = std::abs(group_mean(groups[a]) - group_mean(groups[b]));
                if (ga < 0 || d < best) {
                    best = d;
                    ga = groups[a];
                    gb = groups[b];
                }
            }
        if (best > cfg.beta) break;
        for (auto& g : part.expert_group)
            if (g == gb) g = ga;
        for (auto& g : part.nonexpert_group)
            if (g == gb) g = ga;
        groups.erase(std::find(groups.begin(), groups.end(), gb));
    }

    // Renumber groups 0..G-1 in order of their smallest expert id.
    std::vector<int> order;
    for (int e = 0; e < w.n(); ++e) {
        const int g = part.expert_group[e];
        if (std::find(order.begin(), order.end(), g) == order.end()) order.push_back(g);
    }
    std::vector<int> remap(w.n(), -1);
    for (std::size_t idx = 0; idx < order.size(); ++idx) remap[order[idx]] = static_cast<int>(idx);
    for (auto& g : part.expert_group) g = remap[g];
    for (auto& g : part.nonexpert_group) g = remap[g];
    part.group_count = static_cast<int>(order.size());
    return part;
}

/// Bounded-confidence neighborhood of non-expert v_i: everyone strictly
/// within r_c, self excluded. Ascending ids.
inline std::vector<int> neighbor_set(const WorldState& w, const ScenarioConfig& cfg, int i) {
    const double xi = w.nonexperts.at(i).opinion;
    std::vector<int> out;
    for (const auto& v : w.nonexperts)
        if (v.id != i && std::abs(xi - v.opinion) < cfg.r_c) out.push_back(v.id);
    return out;
}

/// Mean opinion of the experts v_i follows. Undefined without experts; the
/// expert-free experiment mode instead places one inert expert at the goal.
inline double local_goal(const WorldState& w, int i) {
    const auto le = w.partition.followed_experts(i);
    if (le.empty()) throw std::logic_error("local_goal: non-expert follows no experts");
    double sum = 0.0;
    for (int e : le) sum += w.experts[e].opinion;
    return sum / le.size();
}

namespace detail {

/// Shared non-expert blend: x' = phi*x + (1-phi)*(p*O + q*nbr). When p is 0
/// the local-goal term is skipped entirely, which keeps expert-free scenarios
/// well-defined.
inline double blend_update(const WorldState& w, const ScenarioConfig& cfg, int i,
                           double neighbor_term) {
    const auto& v = w.nonexperts[i];
    const double goal_term = cfg.p > 0.0 ? cfg.p * local_goal(w, i) : 0.0;
    const double received = goal_term + cfg.q * neighbor_term;
    return v.stubbornness * v.opinion + (1.0 - v.stubbornness) * received;
}

} // namespace detail

/// Synchronous non-expert update under a communication topology. A row
/// selecting someone outside the neighborhood is a contract violation unless
/// the topology explicitly allows long-range channels (the invasive
/// comparator). Agents whose row selects nobody, whether isolated or merely
/// silenced, keep their opinion.
inline std::vector<double> nonexpert_step(const WorldState& w, const CommTopology& topo,
                                          const ScenarioConfig& cfg) {
    if (topo.size != w.m()) throw std::invalid_argument("nonexpert_step: topology size mismatch");
    std::vector<double> next(w.nonexperts.size());
    for (const auto& v : w.nonexperts) {
        const int i = v.id;
        std::vector<int> nbrs;
        if (!topo.long_range_allowed) nbrs = neighbor_set(w, cfg, i);
        double sum = 0.0;
        int cnt = 0;
        for (int j = 0; j < topo.size; ++j) {
            if (!topo.get(i, j)) continue;
            if (j == i) throw std::invalid_argument("nonexpert_step: self channel");
            if (!topo.long_range_allowed &&
                !std::binary_search(nbrs.begin(), nbrs.end(), j))
                throw std::invalid_argument("nonexpert_step: channel outside neighborhood");
            sum += w.nonexperts[j].opinion;
            ++cnt;
        }
        if (cnt == 0) {
            next[i] = v.opinion; // isolated or silenced
            continue;
        }
        next[i] = detail::blend_update(w, cfg, i, sum / cnt);
    }
    return next;
}

/// Installs precomputed non-expert opinions, runs the expert update from the
/// same snapshot, merges subgroups, and advances the clock. All step variants
/// (learned topology or baseline rules) funnel through here.
inline WorldState advance_world(const WorldState& w, std::vector<double> new_nonexpert_opinions,
                                const ScenarioConfig& cfg) {
    if (w.step >= cfg.max_steps) throw std::logic_error("advance_world: horizon already reached");
    const auto new_expert_opinions = expert_step(w, cfg);
    WorldState next = w;
    for (auto& e : next.experts) e.opinion = new_expert_opinions[e.id];
    for (auto& v : next.nonexperts) v.opinion = new_nonexpert_opinions[v.id];
    next.partition = merge_subgroups(next, cfg);
    next.step = w.step + 1;
    return next;
}

/// One full synchronous step under a communication topology.
inline WorldState world_step(const WorldState& w, const CommTopology& topo,
                             const ScenarioConfig& cfg) {
    return advance_world(w, nonexpert_step(w, topo, cfg), cfg);
}

} // namespace neifi
