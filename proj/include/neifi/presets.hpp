#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "neifi/config.hpp"

namespace neifi {

/// Named, fully resolved scenario. The table1-* presets realize the
/// expert-free protocol: one inert expert pinned at the goal supplies the
/// local goal while p=0 removes its direct influence.
struct ScenarioPreset {
    std::string name;
    ScenarioConfig scenario;
    std::string description;
};

inline const std::vector<ScenarioPreset>& presets() {
    static const std::vector<ScenarioPreset> all = [] {
        std::vector<ScenarioPreset> v;

        auto goal_only = [](double lo, double hi, int m, double goal) {
            ScenarioConfig c;
            c.x_min = lo;
            c.x_max = hi;
            c.m_nonexperts = m;
            c.global_goal = goal;
            c.n_experts = 1;
            c.expert_init_opinions = {goal};
            c.p = 0.0;
            c.q = 1.0;
            return c;
        };
        auto guided = [](double lo, double hi, int m, double goal,
                         std::vector<double> experts) {
            ScenarioConfig c;
            c.x_min = lo;
            c.x_max = hi;
            c.m_nonexperts = m;
            c.global_goal = goal;
            c.n_experts = static_cast<int>(experts.size());
            c.expert_init_opinions = std::move(experts);
            c.p = 0.1;
            c.q = 0.9;
            return c;
        };

        v.push_back({"table1-a", goal_only(0, 4, 20, 2),
                     "uniform [0,4], 20 agents, goal-only guidance"});
        v.push_back({"table1-b", goal_only(0, 4, 40, 2),
                     "uniform [0,4], 40 agents, goal-only guidance"});
        v.push_back({"table1-c", goal_only(0, 8, 40, 4),
                     "uniform [0,8], 40 agents, goal-only guidance"});
        v.push_back({"table1-d", goal_only(0, 8, 80, 4),
                     "uniform [0,8], 80 agents, goal-only guidance"});

        v.push_back({"table2-a", guided(0, 4, 20, 1.5, {1, 3}),
                     "uniform [0,4], 20 agents, experts at 1 and 3, off-center goal 1.5"});
        v.push_back({"table2-b", guided(0, 4, 40, 1.5, {1, 3}),
                     "uniform [0,4], 40 agents, experts at 1 and 3, off-center goal 1.5"});
        v.push_back({"table2-c", guided(0, 8, 40, 3, {1, 3, 5, 7}),
                     "uniform [0,8], 40 agents, four experts, goal 3"});
        v.push_back({"table2-d", guided(0, 8, 80, 3, {1, 3, 5, 7}),
                     "uniform [0,8], 80 agents, four experts, goal 3"});

        {
            ScenarioConfig c = guided(0, 4, 40, 1.5, {0.5, 3});
            c.init_mode = InitMode::ExplicitIntervals;
            c.init_intervals = {{0, 1, 10}, {2, 4, 30}};
            v.push_back({"uneven", c,
                         "10 agents in [0,1], 30 in [2,4], experts at 0.5 and 3"});
            c.p = 0.0;
            c.q = 1.0;
            v.push_back({"uneven-p0", c,
                         "uneven split with goal-only guidance (no direct expert pull)"});
        }

        v.push_back({"multi-expert", guided(0, 8, 40, 3, {1, 3, 5, 7}),
                     "four experts across [0,8], goal 3"});

        {
            ScenarioConfig c;
            c.x_min = 0;
            c.x_max = 8;
            c.m_nonexperts = 40;
            c.global_goal = 4;
            c.n_experts = 0;
            c.p = 0.0;
            c.q = 1.0;
            v.push_back({"expertfree-08-40", c,
                         "bare population on [0,8], no experts at all (baseline contrast runs)"});
        }

        {
            // Ablation base: multi-expert setting with stubbornness pinned to
            // the interval midpoints so reward/model comparisons are not
            // confounded by the stubbornness draw.
            ScenarioConfig c = guided(0, 8, 40, 3, {1, 3, 5, 7});
            c.phi_expert_min = c.phi_expert_max = 0.85;
            c.phi_nonexpert_min = c.phi_nonexpert_max = 0.5;
            v.push_back({"ablation-reward", c,
                         "multi-expert setting, fixed stubbornness, for reward ablations"});
            v.push_back({"ablation-model", c,
                         "multi-expert setting, fixed stubbornness, for model ablations"});
            v.push_back({"ablation-stubbornness", guided(0, 8, 40, 3, {1, 3, 5, 7}),
                         "multi-expert setting, base for stubbornness sweeps"});
        }

        for (const auto& p : v) p.scenario.validate();
        return v;
    }();
    return all;
}

inline const ScenarioPreset& find_preset(const std::string& name) {
    for (const auto& p : presets())
        if (p.name == name) return p;
    throw std::invalid_argument("unknown preset: " + name);
}

} // namespace neifi
