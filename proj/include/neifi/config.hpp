#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace neifi {

/// How non-expert opinions are seeded.
enum class InitMode {
    Uniform,           ///< m draws from [x_min, x_max]
    ExplicitIntervals, ///< per-interval counts, e.g. 10 agents in [0,1] and 30 in [2,4]
};

/// Termination semantics of the expert neighbor-selection loop: stop after the
/// tentative change first reaches mu (as written), or back off to the set just
/// before crossing. The second variant exists for sensitivity checks only.
enum class PcpMuMode { StopAfterCrossing, StopBeforeCrossing };

struct OpinionInterval {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
};

inline void config_error(const std::string& key, const std::string& what) {
    throw std::invalid_argument("config: " + key + ": " + what);
}

/// Full description of one opinion-dynamics scenario. Defaults are the
/// simulation settings used throughout the experiments.
struct ScenarioConfig {
    int n_experts = 1;
    int m_nonexperts = 20;
    double x_min = 0.0;
    double x_max = 4.0;
    double global_goal = 2.0; ///< U, the consensus target
    int max_steps = 35;       ///< T
    double omega = 1e-2;      ///< consensus threshold
    double r_c = 1.0;         ///< bounded confidence radius
    double beta = 0.5;        ///< subgroup merge threshold
    double mu = 0.5;          ///< expert opinion-change threshold
    double p = 0.0;           ///< weight of the local goal in the blend
    double q = 1.0;           ///< weight of the neighbor mean in the blend
    double phi_expert_min = 0.8;
    double phi_expert_max = 0.9;
    double phi_nonexpert_min = 0.4;
    double phi_nonexpert_max = 0.6;
    double delta_c = 0.5; ///< adjacent-gap threshold for cluster counting

    std::vector<double> expert_init_opinions; ///< explicit placement; empty = uniform draws
    InitMode init_mode = InitMode::Uniform;
    std::vector<OpinionInterval> init_intervals; ///< used when init_mode == ExplicitIntervals

    PcpMuMode pcp_mu_mode = PcpMuMode::StopAfterCrossing;
    bool consensus_includes_experts = false;

    void validate() const {
        if (!(x_min < x_max)) config_error("x_min/x_max", "x_min must be < x_max");
        if (global_goal < x_min || global_goal > x_max)
            config_error("U", "global goal must lie in [x_min, x_max]");
        if (n_experts < 0) config_error("n_experts", "must be >= 0");
        if (m_nonexperts < 0) config_error("m_nonexperts", "must be >= 0");
        if (n_experts + m_nonexperts == 0) config_error("population", "n + m must be > 0");
        if (max_steps < 1) config_error("T", "must be >= 1");
        if (!(omega > 0)) config_error("omega", "must be > 0");
        if (!(r_c > 0)) config_error("r_c", "must be > 0");
        if (!(beta > 0)) config_error("beta", "must be > 0");
        if (!(mu > 0)) config_error("mu", "must be > 0");
        if (p < 0) config_error("p", "must be >= 0");
        if (q < 0) config_error("q", "must be >= 0");
        if (p + q != 1.0) config_error("p/q", "p + q must equal 1");
        check_phi("phi_expert", phi_expert_min, phi_expert_max);
        check_phi("phi_nonexpert", phi_nonexpert_min, phi_nonexpert_max);
        if (!(delta_c > 0)) config_error("delta_c", "must be > 0");
        if (!expert_init_opinions.empty() &&
            static_cast<int>(expert_init_opinions.size()) != n_experts)
            config_error("expert_init_opinions", "length must equal n_experts");
        for (double x : expert_init_opinions)
            if (x < x_min || x > x_max)
                config_error("expert_init_opinions", "entry outside [x_min, x_max]");
        if (init_mode == InitMode::ExplicitIntervals) {
            if (init_intervals.empty())
                config_error("init_intervals", "required for explicit-intervals init");
            int total = 0;
            for (const auto& iv : init_intervals) {
                if (!(iv.lo <= iv.hi)) config_error("init_intervals", "lo must be <= hi");
                if (iv.lo < x_min || iv.hi > x_max)
                    config_error("init_intervals", "interval outside [x_min, x_max]");
                if (iv.count < 0) config_error("init_intervals", "count must be >= 0");
                total += iv.count;
            }
            if (total != m_nonexperts)
                config_error("init_intervals", "interval counts must sum to m_nonexperts");
        }
    }

private:
    static void check_phi(const char* key, double lo, double hi) {
        if (!(0.0 <= lo && lo <= hi && hi <= 1.0))
            config_error(key, "range must satisfy 0 <= min <= max <= 1");
    }
};

} // namespace neifi
