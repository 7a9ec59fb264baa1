#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "neifi/config.hpp"
#include "neifi/world.hpp"

namespace neifi {

enum class TerminationCause { Consensus, Horizon };

inline const char* to_string(TerminationCause c) {
    return c == TerminationCause::Consensus ? "consensus" : "horizon";
}

inline TerminationCause termination_cause_from_string(const std::string& s) {
    if (s == "consensus") return TerminationCause::Consensus;
    if (s == "horizon") return TerminationCause::Horizon;
    throw std::invalid_argument("unknown termination cause: " + s);
}

/// Final scores of one episode: cluster count, steps to termination, and mean
/// deviation from the global goal.
struct RunOutcome {
    int cc = 0;
    int cs = 0;
    double scd = 0.0;
    TerminationCause terminated_by = TerminationCause::Horizon;
};

/// True iff the largest pairwise opinion distance is <= omega.
inline bool consensus_reached(const std::vector<double>& opinions, double omega) {
    if (opinions.empty()) throw std::invalid_argument("consensus_reached: empty opinion list");
    const auto [lo, hi] = std::minmax_element(opinions.begin(), opinions.end());
    return *hi - *lo <= omega;
}

/// Single-linkage clustering on the line: sort and split at every adjacent
/// gap larger than delta_c.
inline int cluster_count(std::vector<double> opinions, double delta_c) {
    if (opinions.empty()) throw std::invalid_argument("cluster_count: empty opinion list");
    std::sort(opinions.begin(), opinions.end());
    int clusters = 1;
    for (std::size_t i = 1; i < opinions.size(); ++i)
        if (opinions[i] - opinions[i - 1] > delta_c) ++clusters;
    return clusters;
}

/// Opinions the termination test and metrics run over: non-experts only by
/// default (experts converge by construction).
inline std::vector<double> metric_opinions(const WorldState& w, const ScenarioConfig& cfg) {
    auto ops = w.nonexpert_opinions();
    if (cfg.consensus_includes_experts)
        for (const auto& e : w.experts) ops.push_back(e.opinion);
    return ops;
}

inline RunOutcome run_outcome(const WorldState& terminal, int steps_taken,
                              TerminationCause cause, const ScenarioConfig& cfg) {
    const auto ops = metric_opinions(terminal, cfg);
    RunOutcome out;
    out.cc = cluster_count(ops, cfg.delta_c);
    out.cs = steps_taken;
    double dev = 0.0;
    for (double x : ops) dev += std::abs(x - cfg.global_goal);
    out.scd = dev / ops.size();
    out.terminated_by = cause;
    return out;
}

struct MetricStats {
    double mean = 0.0;
    double variance = 0.0; ///< population variance over the kept runs
};

struct BatchStats {
    MetricStats cc, cs, scd;
    std::size_t kept = 0;
    std::size_t total = 0;
};

/// Keeps the `keep` best outcomes under the lexicographic order
/// (cc asc, cs asc, scd asc) and reports mean/variance per metric, matching
/// the best-10-of-100 reporting protocol.
inline BatchStats batch_stats(std::vector<RunOutcome> outcomes, std::size_t keep) {
    if (outcomes.empty()) throw std::invalid_argument("batch_stats: empty outcome list");
    if (keep > outcomes.size()) throw std::invalid_argument("batch_stats: keep exceeds outcomes");
    const std::size_t total = outcomes.size();
    std::stable_sort(outcomes.begin(), outcomes.end(), [](const RunOutcome& a, const RunOutcome& b) {
        if (a.cc != b.cc) return a.cc < b.cc;
        if (a.cs != b.cs) return a.cs < b.cs;
        return a.scd < b.scd;
    });
    outcomes.resize(keep);

    auto stats = [&](auto accessor) {
        MetricStats s;
        for (const auto& o : outcomes) s.mean += accessor(o);
        s.mean /= outcomes.size();
        for (const auto& o : outcomes) {
            const double d = accessor(o) - s.mean;
            s.variance += d * d;
        }
        s.variance /= outcomes.size();
        return s;
    };
    BatchStats b;
    b.cc = stats([](const RunOutcome& o) { return static_cast<double>(o.cc); });
    b.cs = stats([](const RunOutcome& o) { return static_cast<double>(o.cs); });
    b.scd = stats([](const RunOutcome& o) { return o.scd; });
    b.kept = keep;
    b.total = total;
    return b;
}

} // namespace neifi
