#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "neifi/dynamics.hpp"

using namespace neifi;

namespace {

/// World with hand-placed experts (phi per expert) and non-experts.
WorldState make_world(const std::vector<std::pair<double, double>>& experts,
                      const std::vector<std::pair<double, double>>& nonexperts) {
    WorldState w;
    for (std::size_t i = 0; i < experts.size(); ++i)
        w.experts.push_back({static_cast<int>(i), experts[i].first, experts[i].second});
    for (std::size_t i = 0; i < nonexperts.size(); ++i)
        w.nonexperts.push_back({static_cast<int>(i), nonexperts[i].first, nonexperts[i].second});
    w.partition.expert_group.resize(experts.size());
    for (std::size_t i = 0; i < experts.size(); ++i) w.partition.expert_group[i] = static_cast<int>(i);
    w.partition.nonexpert_group.assign(nonexperts.size(), 0);
    w.partition.group_count = std::max<std::size_t>(experts.size(), 1);
    if (!experts.empty())
        for (std::size_t v = 0; v < nonexperts.size(); ++v) {
            int best = 0;
            for (std::size_t e = 1; e < experts.size(); ++e)
                if (std::abs(nonexperts[v].first - experts[e].first) <
                    std::abs(nonexperts[v].first - experts[best].first))
                    best = static_cast<int>(e);
            w.partition.nonexpert_group[v] = best;
        }
    return w;
}

ScenarioConfig wide_config() {
    ScenarioConfig cfg;
    cfg.x_min = 0;
    cfg.x_max = 10;
    cfg.global_goal = 3.0;
    cfg.p = 0.1;
    cfg.q = 0.9;
    cfg.n_experts = 1;
    cfg.m_nonexperts = 1;
    return cfg;
}

/// Independent re-implementation of the expert selection: enumerate prefixes
/// of the distance-sorted candidate list and report the first one whose
/// tentative update crosses mu (the full list if none does).
std::vector<int> pcp_prefix_oracle(const WorldState& w, const ScenarioConfig& cfg, int i,
                                   std::vector<int> candidates) {
    const double xi = w.experts[i].opinion;
    std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        const double da = std::abs(w.experts[a].opinion - xi);
        const double db = std::abs(w.experts[b].opinion - xi);
        return da != db ? da < db : a < b;
    });
    for (std::size_t len = 1; len <= candidates.size(); ++len) {
        double sum = 0.0;
        for (std::size_t k = 0; k < len; ++k) sum += w.experts[candidates[k]].opinion;
        const double tentative = w.experts[i].stubbornness * xi +
                                 (1.0 - w.experts[i].stubbornness) * (sum / len);
        if (std::abs(tentative - xi) >= cfg.mu)
            return {candidates.begin(), candidates.begin() + len};
    }
    return candidates;
}

} // namespace

TEST_CASE("expert candidate set follows the midpoint condition") {
    ScenarioConfig cfg = wide_config();
    cfg.global_goal = 3.0;

    SECTION("helpful far neighbor is included") {
        const auto w = make_world({{1, 0.8}, {7, 0.8}}, {});
        const auto g = expert_candidates(w, cfg, 0); // |(1+7)/2-3|=1 <= |1-3|=2
        REQUIRE(std::find(g.begin(), g.end(), 1) != g.end());
    }
    SECTION("boundary midpoints are included") {
        const auto w = make_world({{1, 0.8}, {9, 0.8}}, {});
        const auto g = expert_candidates(w, cfg, 0); // |(1+9)/2-3|=2 == |1-3|
        REQUIRE(std::find(g.begin(), g.end(), 1) != g.end());
    }
    SECTION("beyond the boundary is excluded") {
        const auto w = make_world({{1, 0.8}, {9.5, 0.8}}, {});
        const auto g = expert_candidates(w, cfg, 0);
        REQUIRE(std::find(g.begin(), g.end(), 1) == g.end());
    }
    SECTION("an expert at the goal only admits experts at the goal") {
        const auto w = make_world({{3, 0.8}, {3, 0.8}, {3.4, 0.8}}, {});
        auto g = expert_candidates(w, cfg, 0);
        std::erase(g, 0);
        REQUIRE(g == std::vector<int>{1});
    }
    SECTION("the definition always admits the expert itself") {
        const auto w = make_world({{1, 0.8}}, {});
        const auto g = expert_candidates(w, cfg, 0);
        REQUIRE(g == std::vector<int>{0});
    }
}

TEST_CASE("expert filtered set walks nearest-first and stops at mu") {
    ScenarioConfig cfg = wide_config();
    cfg.mu = 0.5;

    SECTION("exhausts candidates when the change stays small") {
        // distances 0.1, 0.2, 3.0 from x=0; phi 0.8 keeps every tentative
        // update below mu, so all three join.
        const auto w = make_world({{0, 0.8}, {0.1, 0.8}, {0.2, 0.8}, {3.0, 0.8}}, {});
        const auto chosen = expert_filtered_set(w, cfg, 0, {1, 2, 3});
        REQUIRE(chosen == std::vector<int>{1, 2, 3});
    }
    SECTION("stops once the tentative update crosses mu, keeping the last addition") {
        // after {0.1, 0.2} the mean is 0.15 (update 0.03); adding 9 lifts the
        // mean to 3.1 and the update to 0.62 >= mu, which ends the loop.
        const auto w = make_world({{0, 0.8}, {0.1, 0.8}, {0.2, 0.8}, {9.0, 0.8}}, {});
        const auto chosen = expert_filtered_set(w, cfg, 0, {1, 2, 3});
        REQUIRE(chosen == std::vector<int>{1, 2, 3});
        REQUIRE(pcp_prefix_oracle(w, cfg, 0, {1, 2, 3}) == chosen);
    }
    SECTION("cap mode instead drops the crossing addition") {
        ScenarioConfig cap = cfg;
        cap.pcp_mu_mode = PcpMuMode::StopBeforeCrossing;
        const auto w = make_world({{0, 0.8}, {0.1, 0.8}, {0.2, 0.8}, {9.0, 0.8}}, {});
        REQUIRE(expert_filtered_set(w, cap, 0, {1, 2, 3}) == std::vector<int>{1, 2});
    }
    SECTION("empty candidates produce an empty set and an unchanged opinion") {
        const auto w = make_world({{2.0, 0.8}}, {});
        REQUIRE(expert_filtered_set(w, cfg, 0, {}).empty());
        REQUIRE(expert_step(w, cfg)[0] == 2.0);
    }
    SECTION("a single candidate below mu survives by exhaustion") {
        const auto w = make_world({{2.0, 0.8}, {2.5, 0.8}}, {});
        REQUIRE(expert_filtered_set(w, cfg, 0, {1}) == std::vector<int>{1});
    }
}

TEST_CASE("pcp greedy equals the prefix-enumeration oracle on random cases") {
    ScenarioConfig cfg = wide_config();
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(5)); // 2..6 experts
        std::vector<std::pair<double, double>> experts;
        for (int e = 0; e < n; ++e)
            experts.push_back({rng.uniform(0, 10), rng.uniform(0.5, 0.95)});
        const auto w = make_world(experts, {});
        ScenarioConfig c = cfg;
        c.mu = rng.uniform(0.05, 1.0);
        const int i = static_cast<int>(rng.uniform_index(n));
        auto cands = expert_candidates(w, c, i);
        std::erase(cands, i);
        REQUIRE(expert_filtered_set(w, c, i, cands) == pcp_prefix_oracle(w, c, i, cands));
    }
}

TEST_CASE("expert step arithmetic") {
    ScenarioConfig cfg = wide_config();
    SECTION("phi 0.8 toward a mean of 3") {
        // candidates: only the expert at 3 qualifies (goal at 3)
        const auto w = make_world({{1, 0.8}, {3, 0.9}}, {});
        REQUIRE(expert_step(w, cfg)[0] == Catch::Approx(0.8 * 1 + 0.2 * 3));
    }
    SECTION("full stubbornness freezes the opinion") {
        const auto w = make_world({{1, 1.0}, {3, 0.9}}, {});
        REQUIRE(expert_step(w, cfg)[0] == 1.0);
    }
    SECTION("experts at the goal are a fixed point") {
        const auto w = make_world({{3, 0.8}, {3, 0.85}, {3, 0.9}}, {});
        for (double x : expert_step(w, cfg)) REQUIRE(x == 3.0);
    }
}

TEST_CASE("expert goal monotonicity holds for phi >= 0.5 over random steps") {
    ScenarioConfig cfg = wide_config();
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(6));
        std::vector<std::pair<double, double>> experts;
        for (int e = 0; e < n; ++e)
            experts.push_back({rng.uniform(0, 10), rng.uniform(0.5, 1.0)});
        const auto w = make_world(experts, {});
        ScenarioConfig c = cfg;
        c.global_goal = rng.uniform(0, 10);
        c.mu = rng.uniform(0.05, 2.0);
        const auto next = expert_step(w, c);
        for (int e = 0; e < n; ++e)
            REQUIRE(std::abs(next[e] - c.global_goal) <=
                    std::abs(w.experts[e].opinion - c.global_goal) + 1e-12);
    }
}

TEST_CASE("subgroups merge by ascending mean difference") {
    ScenarioConfig cfg = wide_config();
    cfg.beta = 0.5;

    SECTION("two groups within beta merge") {
        auto w = make_world({{1.4, 0.8}, {1.8, 0.8}}, {{1.5, 0.5}});
        const auto part = merge_subgroups(w, cfg);
        REQUIRE(part.group_count == 1);
        REQUIRE(part.expert_group[0] == part.expert_group[1]);
    }
    SECTION("cascading merge re-evaluates after each union") {
        // means 1.0, 1.4, 1.9: (1.0,1.4) merges to mean 1.2; the gap to 1.9
        // is then 0.7 > beta, so two groups remain.
        auto w = make_world({{1.0, 0.8}, {1.4, 0.8}, {1.9, 0.8}}, {});
        const auto part = merge_subgroups(w, cfg);
        REQUIRE(part.group_count == 2);
        REQUIRE(part.expert_group[0] == part.expert_group[1]);
        REQUIRE(part.expert_group[2] != part.expert_group[0]);
    }
    SECTION("a single group is unchanged") {
        auto w = make_world({{1.0, 0.8}}, {{2.0, 0.5}});
        const auto part = merge_subgroups(w, cfg);
        REQUIRE(part.group_count == 1);
    }
    SECTION("followers travel with their merged groups") {
        auto w = make_world({{1.0, 0.8}, {1.3, 0.8}}, {{0.9, 0.5}, {1.4, 0.5}});
        const auto part = merge_subgroups(w, cfg);
        REQUIRE(part.nonexpert_group[0] == part.nonexpert_group[1]);
    }
}

TEST_CASE("neighbor sets use a strict radius and exclude self") {
    ScenarioConfig cfg = wide_config();
    cfg.r_c = 1.0;
    const auto w = make_world({{5, 0.8}}, {{0, 0.5}, {0.9, 0.5}, {1.0, 0.5}, {2.5, 0.5}});

    REQUIRE(neighbor_set(w, cfg, 0) == std::vector<int>{1}); // 1.0 is excluded by <
    REQUIRE(neighbor_set(w, cfg, 3).empty());                // nearest other is 1.5 away
    const auto all_close = make_world({{5, 0.8}}, {{1, .5}, {1.1, .5}, {1.2, .5}, {1.3, .5}});
    REQUIRE(neighbor_set(all_close, cfg, 0).size() == 3);
}

TEST_CASE("neighbor relation is symmetric") {
    ScenarioConfig cfg = wide_config();
    Rng rng(5);
    std::vector<std::pair<double, double>> agents;
    for (int i = 0; i < 25; ++i) agents.push_back({rng.uniform(0, 10), 0.5});
    const auto w = make_world({{5, 0.8}}, agents);
    for (int i = 0; i < 25; ++i) {
        const auto ni = neighbor_set(w, cfg, i);
        for (int j : ni) {
            const auto nj = neighbor_set(w, cfg, j);
            REQUIRE(std::find(nj.begin(), nj.end(), i) != nj.end());
        }
    }
}

TEST_CASE("local goal is the mean of followed experts") {
    ScenarioConfig cfg = wide_config();
    const auto w = make_world({{1.4, 0.8}, {1.8, 0.8}}, {{1.6, 0.5}});
    // both experts sit in distinct groups; force one merged group to observe the mean
    auto merged = w;
    merged.partition.expert_group = {0, 0};
    merged.partition.nonexpert_group = {0};
    merged.partition.group_count = 1;
    REQUIRE(local_goal(merged, 0) == Catch::Approx(1.6));

    const auto single = make_world({{3.0, 0.8}}, {{1.0, 0.5}});
    REQUIRE(local_goal(single, 0) == 3.0);
}

TEST_CASE("non-expert update blends goal and selected neighbors") {
    ScenarioConfig cfg = wide_config();
    cfg.p = 0.1;
    cfg.q = 0.9;
    cfg.r_c = 2.0; // wide enough that both neighbors are perceivable
    // focal agent at 1 (phi=0.5), neighbors at 1.9 and 2.1 (selected mean 2),
    // single expert at 3 so O = 3: C = 0.1*3 + 0.9*2 = 2.1, x' = 1.55.
    const auto w = make_world({{3.0, 0.8}}, {{1.0, 0.5}, {1.9, 0.5}, {2.1, 0.9}});
    CommTopology topo(3);
    topo.set(0, 1, true);
    topo.set(0, 2, true);
    const auto next = nonexpert_step(w, topo, cfg);
    REQUIRE(next[0] == Catch::Approx(1.55));

    SECTION("p=0, q=1 uses the neighbor mean exactly") {
        ScenarioConfig c2 = cfg;
        c2.p = 0;
        c2.q = 1;
        const auto n2 = nonexpert_step(w, topo, c2);
        REQUIRE(n2[0] == Catch::Approx(0.5 * 1.0 + 0.5 * 2.0));
    }
}

TEST_CASE("isolated and silenced agents keep their opinion") {
    ScenarioConfig cfg = wide_config();
    cfg.p = 0;
    cfg.q = 1;
    const auto w = make_world({{3.0, 0.8}}, {{0.0, 0.5}, {5.0, 0.5}, {5.2, 0.5}});
    CommTopology topo(3);
    // agent 0 has empty neighborhood; agents 1,2 are mutual neighbors but get
    // all-zero rows (no communication this step)
    const auto next = nonexpert_step(w, topo, cfg);
    REQUIRE(next[0] == 0.0);
    REQUIRE(next[1] == 5.0);
    REQUIRE(next[2] == 5.2);
}

TEST_CASE("topology rows outside the neighborhood are rejected") {
    ScenarioConfig cfg = wide_config();
    const auto w = make_world({{3.0, 0.8}}, {{0.0, 0.5}, {5.0, 0.5}});
    CommTopology topo(2);
    topo.set(0, 1, true); // distance 5 >= r_c
    REQUIRE_THROWS_AS(nonexpert_step(w, topo, cfg), std::invalid_argument);

    SECTION("unless the topology explicitly allows long-range channels") {
        CommTopology lr(2);
        lr.long_range_allowed = true;
        lr.set(0, 1, true);
        REQUIRE_NOTHROW(nonexpert_step(w, lr, cfg));
    }
}

TEST_CASE("world step composes the synchronous updates") {
    ScenarioConfig cfg = wide_config();
    cfg.p = 0.1;
    cfg.q = 0.9;

    SECTION("a consensus world is a fixed point") {
        const auto w = make_world({{3.0, 0.8}}, {{3.0, 0.5}, {3.0, 0.5}});
        CommTopology topo(2);
        topo.set(0, 1, true);
        topo.set(1, 0, true);
        const auto next = world_step(w, topo, cfg);
        REQUIRE(next.step == 1);
        REQUIRE(next.nonexperts[0].opinion == 3.0);
        REQUIRE(next.nonexperts[1].opinion == 3.0);
    }
    SECTION("groups whose means meet after the expert update merge in the same step") {
        // experts 1.0 and 1.6 start 0.6 > beta apart; the update pulls them to
        // 1.12 and 1.48 (0.36 <= beta), so one group remains afterwards.
        ScenarioConfig c = wide_config();
        c.global_goal = 1.3;
        c.beta = 0.5;
        auto w = make_world({{1.0, 0.8}, {1.6, 0.8}}, {{1.0, 0.5}});
        REQUIRE(w.partition.group_count == 2);
        const auto next = world_step(w, CommTopology(1), c);
        REQUIRE(next.experts[0].opinion == Catch::Approx(1.12));
        REQUIRE(next.experts[1].opinion == Catch::Approx(1.48));
        REQUIRE(next.partition.group_count == 1);
    }
    SECTION("stepping past the horizon is an error") {
        auto w = make_world({{3.0, 0.8}}, {{1.0, 0.5}});
        w.step = wide_config().max_steps;
        REQUIRE_THROWS_AS(world_step(w, CommTopology(1), cfg), std::logic_error);
    }
}

TEST_CASE("hull confinement and merge monotonicity over random evolutions") {
    Rng rng(31337);
    for (int trial = 0; trial < 20; ++trial) {
        ScenarioConfig cfg;
        cfg.x_min = 0;
        cfg.x_max = 8;
        cfg.global_goal = rng.uniform(0, 8);
        cfg.n_experts = 1 + static_cast<int>(rng.uniform_index(4));
        cfg.m_nonexperts = 10;
        cfg.p = 0.1;
        cfg.q = 0.9;
        WorldState w = init_world(cfg, rng);

        auto lo_hi = [](const WorldState& ws) {
            double lo = 1e300, hi = -1e300;
            for (const auto& e : ws.experts) {
                lo = std::min(lo, e.opinion);
                hi = std::max(hi, e.opinion);
            }
            for (const auto& v : ws.nonexperts) {
                lo = std::min(lo, v.opinion);
                hi = std::max(hi, v.opinion);
            }
            return std::pair{lo, hi};
        };

        int groups_before = w.partition.group_count;
        for (int step = 0; step < 10; ++step) {
            const auto [lo0, hi0] = lo_hi(w);
            // random legal topology: keep a random subset of each neighborhood
            CommTopology topo(w.m());
            for (int i = 0; i < w.m(); ++i)
                for (int j : neighbor_set(w, cfg, i))
                    if (rng.bernoulli(0.7)) topo.set(i, j, true);
            w = world_step(w, topo, cfg);
            const auto [lo1, hi1] = lo_hi(w);
            REQUIRE(lo1 >= lo0 - 1e-12);
            REQUIRE(hi1 <= hi0 + 1e-12);
            REQUIRE(w.partition.group_count <= groups_before);
            groups_before = w.partition.group_count;
            // stubbornness never changes within a run
            for (const auto& v : w.nonexperts)
                REQUIRE((v.stubbornness >= 0.4 && v.stubbornness <= 0.6));
        }
    }
}

TEST_CASE("merged groups never split") {
    ScenarioConfig cfg;
    cfg.x_min = 0;
    cfg.x_max = 8;
    cfg.global_goal = 4;
    cfg.n_experts = 4;
    cfg.m_nonexperts = 8;
    cfg.p = 0.1;
    cfg.q = 0.9;
    Rng rng(7);
    WorldState w = init_world(cfg, rng);
    std::vector<std::pair<int, int>> merged_pairs;
    for (int step = 0; step < 15; ++step) {
        CommTopology topo(w.m());
        for (int i = 0; i < w.m(); ++i)
            for (int j : neighbor_set(w, cfg, i)) topo.set(i, j, true);
        w = world_step(w, topo, cfg);
        for (const auto& [a, b] : merged_pairs)
            REQUIRE(w.partition.expert_group[a] == w.partition.expert_group[b]);
        for (int a = 0; a < w.n(); ++a)
            for (int b = a + 1; b < w.n(); ++b)
                if (w.partition.expert_group[a] == w.partition.expert_group[b])
                    merged_pairs.push_back({a, b});
    }
}
