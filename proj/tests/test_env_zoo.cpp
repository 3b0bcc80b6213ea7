#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "rlgen/env_zoo.hpp"
#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"
#include "rlgen/rng.hpp"

using namespace rlgen;
using namespace rlgen::env_zoo;
using family::Theta;

namespace {

Theta hypercube_theta(std::uint64_t seed, std::int64_t goal, std::int64_t start) {
    Theta t;
    t.seed = seed;
    t.fields["goal"] = goal;
    t.fields["start"] = start;
    return t;
}

double start_value(const TabularMdp& mdp) {
    ValueTables tables = value_iteration(mdp, 1e-12);
    double v = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) v += mdp.start_dist()[s] * tables.v[s];
    return v;
}

/// Runs the family sim and a tabular-episode sim side by side under one action
/// stream; rewards and done flags must agree step for step.
void check_sim_tabular_agreement(const family::MdpFamily& fam, const Theta& theta,
                                 std::uint64_t seed, int episodes) {
    TabularMdp tab = fam.member(theta);
    for (int ep = 0; ep < episodes; ++ep) {
        auto sim = fam.sim(theta);
        family::TabularEpisodeSim ref(tab, 0);
        std::uint64_t ep_seed = derive_seed(seed, "agreement", static_cast<std::uint64_t>(ep));
        sim->reset(ep_seed);
        ref.reset(ep_seed);
        auto rng = make_rng(ep_seed, "actions");
        for (int t = 0; t < sim->max_steps(); ++t) {
            int a = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(sim->num_actions())));
            family::SimStepResult got = sim->step(a);
            family::SimStepResult want = ref.step(a);
            REQUIRE(got.reward == want.reward);
            REQUIRE(got.done == want.done);
            if (got.done) break;
        }
    }
}

}  // namespace

TEST_CASE("keyed permutations are seeded bijections with exact inverses") {
    KeyedPermutation perm = keyed_permutation(1, 4);
    REQUIRE(perm.forward.size() == 16);
    REQUIRE(perm.inverse.size() == 16);
    for (HypercubeWord x = 0; x < 16; ++x) {
        CHECK(perm.inv(perm.fwd(x)) == x);
        CHECK(perm.fwd(perm.inv(x)) == x);
    }
    std::set<HypercubeWord> image(perm.forward.begin(), perm.forward.end());
    CHECK(image.size() == 16);

    CHECK(keyed_permutation(1, 4).forward == perm.forward);  // reproducible
    CHECK_FALSE(keyed_permutation(2, 4).forward == perm.forward);

    // m = 1: the only options are identity and swap, and both stay invertible.
    KeyedPermutation tiny = keyed_permutation(9, 1);
    CHECK((tiny.forward[0] ^ tiny.forward[1]) == 1u);
    CHECK(tiny.inv(tiny.fwd(0)) == 0u);

    CHECK_THROWS_AS(keyed_permutation(1, 0), std::invalid_argument);
    CHECK_THROWS_AS(keyed_permutation(1, 17), MTooLarge);
}

TEST_CASE("keyed functions are seeded uniform tables") {
    KeyedFunction fn = keyed_function(3, 4, 2);
    REQUIRE(fn.table.size() == 64);  // 2^(4+2)
    for (HypercubeWord v : fn.table) CHECK(v < 16);
    CHECK(fn.eval(5, 3) == fn.table[(5u << 2) | 3u]);
    CHECK(keyed_function(3, 4, 2).table == fn.table);
    CHECK_FALSE(keyed_function(4, 4, 2).table == fn.table);

    CHECK_THROWS_AS(keyed_function(3, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(keyed_function(3, 4, 5), std::invalid_argument);
    CHECK_THROWS_AS(keyed_function(3, 17, 4), MTooLarge);
}

TEST_CASE("keyed function entries pass a uniformity goodness-of-fit check") {
    // 256 table entries over 16 values; chi-square with 15 degrees of freedom,
    // 99th percentile critical value 30.578.
    KeyedFunction fn = keyed_function(3, 4, 4);
    std::vector<int> counts(16, 0);
    for (HypercubeWord v : fn.table) ++counts[v];
    double expected = 256.0 / 16.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 30.578);
}

TEST_CASE("hash family: observations follow the XOR law") {
    family::MdpFamily fam = make_hash_family(3, 5);
    Theta theta = fam.params().generate("train", 0, 0);
    auto sim = fam.sim(theta);
    CHECK(sim->num_actions() == 8);
    CHECK(sim->max_steps() == 9);  // default horizon m^2
    CHECK(sim->discount() == 1.0);

    family::SimObservation obs = sim->reset(0);
    CHECK(obs.goal == static_cast<std::uint64_t>(theta.field("goal")));
    std::uint64_t o = obs.view;
    for (int a : {0b011, 0b101, 0b110, 0}) {
        family::SimStepResult r = sim->step(a);
        CHECK(r.view == (o ^ static_cast<std::uint64_t>(a)));
        o = r.view;
        if (r.done) break;
    }
}

TEST_CASE("hash family: exact tables agree with the simulator") {
    family::MdpFamily fam = make_hash_family(3, 77);
    for (std::uint64_t i = 0; i < 4; ++i) {
        Theta theta = fam.params().generate("train", 0, i);
        TabularMdp tab = fam.member(theta);
        CHECK(tab.num_states() == 9);  // 2^3 words plus the terminal
        CHECK(tab.num_actions() == 8);
        CHECK(tab.horizon() == Horizon::finite(9));
        CHECK(tab.discount() == 1.0);
        check_sim_tabular_agreement(fam, theta, derive_seed(4, "hash-agree", i), 30);
        // One observation-matching action reaches the goal immediately: V* = 1.
        CHECK(std::abs(start_value(tab) - 1.0) <= 1e-9);
    }
}

TEST_CASE("hash family: uniform random play succeeds at the closed-form rate") {
    family::MdpFamily fam = make_hash_family(8, 2718);
    Theta theta = fam.params().generate("eval", 1, 0);
    auto rng = make_rng(12, "random-play");
    const int episodes = 2000;
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        auto sim = fam.sim(theta);
        sim->reset(static_cast<std::uint64_t>(ep));
        for (int t = 0; t < sim->max_steps(); ++t) {
            family::SimStepResult r = sim->step(static_cast<int>(uniform_below(rng, 256)));
            if (r.done) {
                if (r.reward > 0.0) ++successes;
                break;
            }
        }
    }
    // Per step the fresh uniform action hits the goal with probability 2^-8.
    double p = 1.0 - std::pow(255.0 / 256.0, 64.0);
    double se = std::sqrt(p * (1.0 - p) / episodes);
    CHECK(std::abs(successes / static_cast<double>(episodes) - p) <= 3.0 * se);
}

TEST_CASE("prf family: exact tables agree with the simulator") {
    family::MdpFamily fam = make_prf_family(4, 99, 2);
    for (std::uint64_t i = 0; i < 4; ++i) {
        Theta theta = fam.params().generate("train", 0, i);
        TabularMdp tab = fam.member(theta);
        CHECK(tab.num_states() == 17);
        CHECK(tab.num_actions() == 4);
        check_sim_tabular_agreement(fam, theta, derive_seed(5, "prf-agree", i), 30);
    }
    // Families rebuilt from the same key are identical.
    family::MdpFamily again = make_prf_family(4, 99, 2);
    Theta theta = fam.params().generate("train", 0, 0);
    CHECK(again.member(theta) == fam.member(theta));
}

TEST_CASE("prf family: optimal value is exactly reachability within the horizon") {
    family::MdpFamily fam = make_prf_family(4, 31, 2, /*horizon=*/16);
    // Probe the simulator itself for the true successor table.
    std::map<std::pair<std::uint64_t, int>, std::uint64_t> truth;
    for (std::uint64_t s = 0; s < 16; ++s) {
        for (int a = 0; a < 4; ++a) {
            auto sim = fam.sim(hypercube_theta(1, 0, static_cast<std::int64_t>(s)));
            sim->reset(0);
            truth[{s, a}] = sim->step(a).view;
        }
    }
    auto reachable_within = [&truth](std::uint64_t s0, std::uint64_t goal, int horizon) {
        // Arrival semantics: at least one step, so start == goal needs a cycle.
        std::map<std::uint64_t, int> dist;
        std::vector<std::uint64_t> queue;
        for (int a = 0; a < 4; ++a) {
            std::uint64_t n = truth.at({s0, a});
            if (!dist.count(n)) {
                dist[n] = 1;
                queue.push_back(n);
            }
        }
        for (std::size_t head = 0; head < queue.size(); ++head) {
            std::uint64_t u = queue[head];
            if (dist[u] >= horizon) continue;
            for (int a = 0; a < 4; ++a) {
                std::uint64_t n = truth.at({u, a});
                if (!dist.count(n)) {
                    dist[n] = dist[u] + 1;
                    queue.push_back(n);
                }
            }
        }
        return dist.count(goal) && dist[goal] <= horizon;
    };
    for (std::uint64_t i = 0; i < 20; ++i) {
        Theta theta = fam.params().generate("train", 3, i);
        double v = start_value(fam.member(theta));
        bool reach = reachable_within(static_cast<std::uint64_t>(theta.field("start")),
                                      static_cast<std::uint64_t>(theta.field("goal")), 16);
        CHECK(v == doctest::Approx(reach ? 1.0 : 0.0).epsilon(1e-9));
    }
}

TEST_CASE("hypercube horizon handling") {
    CHECK(make_hash_family(3, 1, 5).member(hypercube_theta(0, 1, 2)).horizon() ==
          Horizon::finite(5));
    CHECK_THROWS_AS(make_hash_family(3, 1, -1), std::invalid_argument);
    HypercubeEpisodeSpec spec = hypercube_spec(hypercube_theta(0, 6, 2), 12);
    CHECK(spec.goal == 6u);
    CHECK(spec.start == 2u);
    CHECK(spec.horizon == 12);
}

TEST_CASE("large word sizes are sim-only") {
    family::MdpFamily fam = make_hash_family(11, 8);
    Theta theta = fam.params().generate("train", 0, 0);
    CHECK_THROWS_AS(to_tabular(fam, theta), CapExceeded);
    auto sim = fam.sim(theta);  // simulation still works at m = 11
    family::SimObservation obs = sim->reset(0);
    CHECK(obs.view < 2048);
    CHECK_THROWS_AS(make_hash_family(17, 8), MTooLarge);
}

TEST_CASE("gridworld members: clamped moves, mirrored swaps, collect-once goal") {
    family::MdpFamily fam = make_hidden_param_gridworld(3, 3, {/*start=*/3, /*goal=*/5});
    REQUIRE(fam.params().thetas().size() == 2);
    TabularMdp normal = fam.member(fam.params().thetas()[0]);
    TabularMdp mirrored = fam.member(fam.params().thetas()[1]);
    CHECK(normal.num_states() == 10);  // 9 cells plus the sink
    CHECK(normal.num_actions() == 4);
    CHECK(normal.discount() == doctest::Approx(0.99));

    // Cell 3 is (0,1): right moves to 4, left clamps, up moves to 0.
    CHECK(normal.transitions(3, 1)[0].next == 4);
    CHECK(normal.transitions(3, 0)[0].next == 3);
    CHECK(normal.transitions(3, 2)[0].next == 0);
    CHECK(normal.transitions(3, 3)[0].next == 6);
    // The mirrored member swaps left and right effects, vertical is unchanged.
    CHECK(mirrored.transitions(3, 0)[0].next == 4);
    CHECK(mirrored.transitions(3, 1)[0].next == 3);
    CHECK(mirrored.transitions(3, 2)[0].next == 0);

    // Goal cell: every action pays 1 once and drops into the absorbing sink.
    for (int a = 0; a < 4; ++a) {
        CHECK(normal.reward(5, a) == 1.0);
        CHECK(normal.transitions(5, a)[0].next == 9);
        CHECK(normal.transitions(9, a)[0].next == 9);
        CHECK(normal.reward(9, a) == 0.0);
    }

    // Two moves to the goal, reward on the third action: V* = 0.99^2.
    CHECK(std::abs(start_value(normal) - 0.99 * 0.99) <= 1e-9);
    CHECK(std::abs(start_value(mirrored) - 0.99 * 0.99) <= 1e-9);

    // The sim hides theta: goal channel 0, views are cell indices.
    auto sim = fam.sim(fam.params().thetas()[0]);
    family::SimObservation obs = sim->reset(1);
    CHECK(obs.view == 3);
    CHECK(obs.goal == 0);
    CHECK(sim->step(1).view == 4);
    family::SimStepResult at_goal = sim->step(1);
    CHECK(at_goal.view == 5);
    CHECK(at_goal.reward == 0.0);  // arrival is free; acting at the goal pays
    family::SimStepResult done = sim->step(2);
    CHECK(done.reward == 1.0);
    CHECK(done.done);
    CHECK(done.view == 9);
}

TEST_CASE("gridworld guards") {
    CHECK_THROWS_AS(make_hidden_param_gridworld(1, 1, {0, 0}), DegenerateGrid);
    CHECK_THROWS_AS(make_hidden_param_gridworld(0, 3, {0, 1}), DegenerateGrid);
    CHECK_THROWS_AS(make_hidden_param_gridworld(3, 3, {4, 4}), DegenerateGrid);
    CHECK_THROWS_AS(make_hidden_param_gridworld(3, 3, {-1, 4}), DegenerateGrid);
    CHECK_THROWS_AS(make_hidden_param_gridworld(3, 3, {4, 9}), DegenerateGrid);
    CHECK_THROWS_AS(make_goal_variant_gridworld(2, 1, 7, 0), DegenerateGrid);
}

TEST_CASE("goal-variant gridworld draws goals uniformly off the start") {
    family::MdpFamily fam = make_goal_variant_gridworld(4, 3, /*start_cell=*/5, 2024);
    std::set<std::int64_t> goals;
    for (std::uint64_t i = 0; i < 200; ++i) {
        Theta theta = fam.params().generate("train", 0, i);
        CHECK(theta.field("start") == 5);
        CHECK(theta.field("mirror") == 0);
        std::int64_t goal = theta.field("goal");
        CHECK(goal >= 0);
        CHECK(goal < 12);
        CHECK(goal != 5);
        goals.insert(goal);
    }
    CHECK(goals.size() == 11);  // 200 draws cover all non-start cells

    Theta theta = fam.params().generate("train", 0, 0);
    auto sim = fam.sim(theta);
    CHECK(sim->reset(0).goal == 0);  // the goal cell stays hidden
    CHECK(std::abs(start_value(fam.member(theta)) - 1.0) < 1.0);  // sane value range
}
