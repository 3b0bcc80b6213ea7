#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <vector>

#include "rlgen/env_zoo.hpp"
#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"
#include "rlgen/optimality.hpp"
#include "rlgen/oracles.hpp"
#include "rlgen/rng.hpp"

using namespace rlgen;
using namespace rlgen::family;
using namespace rlgen::optimality;

namespace {

Theta theta_n(std::uint64_t seed) {
    Theta t;
    t.seed = seed;
    return t;
}

EmpiricalSample sample_all(const MdpFamily& fam) {
    EmpiricalSample s;
    s.thetas = fam.params().thetas();
    s.label = "all";
    return s;
}

/// One-state, two-action family with per-theta rewards r0/r1 stored in fields
/// scaled by a percent factor; gamma 0.5 self-loops.
MdpFamily bandit_family(std::vector<Theta> thetas) {
    auto build = [](const Theta& theta) {
        TabularMdp mdp(1, 2, 0.5, Horizon::unbounded());
        double scale = static_cast<double>(theta.field("scale_pct", 100)) / 100.0;
        mdp.set_reward(0, 0, scale * static_cast<double>(theta.field("r0")));
        mdp.set_reward(0, 1, scale * static_cast<double>(theta.field("r1")));
        mdp.add_transition(0, 0, 0, 1.0);
        mdp.add_transition(0, 1, 0, 1.0);
        mdp.set_start_dirac(0);
        return mdp;
    };
    return MdpFamily(ParamSpace::finite(std::move(thetas)), build, /*shared_spaces=*/true);
}

Theta bandit_theta(std::uint64_t seed, std::int64_t r0, std::int64_t r1,
                   std::int64_t scale_pct = 100) {
    Theta t;
    t.seed = seed;
    t.fields["r0"] = r0;
    t.fields["r1"] = r1;
    t.fields["scale_pct"] = scale_pct;
    return t;
}

/// Three-state family where the two members disagree only at the unreachable
/// state 2 (no transitions lead into it).
MdpFamily unreachable_conflict_family() {
    auto build = [](const Theta& theta) {
        TabularMdp mdp(3, 2, 0.5, Horizon::unbounded());
        for (int a = 0; a < 2; ++a) {
            mdp.add_transition(0, a, 1, 1.0);
            mdp.add_transition(1, a, 1, 1.0);
            mdp.add_transition(2, a, 2, 1.0);
        }
        mdp.set_reward(0, 0, 1.0);  // shared argmax at the start
        if (theta.field("flip") == 0)
            mdp.set_reward(2, 0, 1.0);
        else
            mdp.set_reward(2, 1, 1.0);
        mdp.set_start_dirac(0);
        return mdp;
    };
    Theta a = theta_n(0);
    a.fields["flip"] = 0;
    Theta b = theta_n(1);
    b.fields["flip"] = 1;
    return MdpFamily(ParamSpace::finite({a, b}), build, /*shared_spaces=*/true);
}

/// Exhaustive reference decision: does any of the |A|^|S| deterministic
/// policies reach V*(start) within `slack` in every member?
bool brute_force_shared(const MdpFamily& fam, const EmpiricalSample& sample, double slack) {
    std::vector<TabularMdp> members;
    for (const Theta& t : sample.thetas) members.push_back(fam.member(t));
    std::vector<double> best;
    for (const auto& m : members) {
        ValueTables tables = value_iteration(m, 1e-12);
        double v = 0.0;
        for (int s = 0; s < m.num_states(); ++s) v += m.start_dist()[s] * tables.v[s];
        best.push_back(v);
    }
    const int S = members.front().num_states();
    const int A = members.front().num_actions();
    DeterministicPolicy pi;
    pi.action.assign(S, 0);
    while (true) {
        bool ok = true;
        for (std::size_t t = 0; t < members.size() && ok; ++t) {
            double got = policy_evaluation(members[t], pi).episode_reward;
            if (best[t] - got > slack) ok = false;
        }
        if (ok) return true;
        int i = S - 1;
        while (i >= 0 && pi.action[i] == A - 1) pi.action[i--] = 0;
        if (i < 0) return false;
        ++pi.action[i];
    }
}

}  // namespace

TEST_CASE("strong check accepts families with pointwise-shared argmax sets") {
    // Same argmax everywhere, different reward scales.
    MdpFamily fam = bandit_family({bandit_theta(0, 1, 0), bandit_theta(1, 1, 0, 200)});
    EmpiricalSample sample = sample_all(fam);
    OptimalityCertificate cert = strong_check(fam, sample);
    CHECK(cert.verdict == Verdict::SharedOptimal);
    CHECK(cert.policy.action == std::vector<int>{0});
    REQUIRE(cert.per_theta_values.size() == 2);
    CHECK(cert.per_theta_values[0].second == doctest::Approx(2.0));
    CHECK(cert.per_theta_values[1].second == doctest::Approx(4.0));
    CHECK(cert.slack > 0.0);
}

TEST_CASE("strong check degrades to unknown on any empty intersection") {
    MdpFamily fam = unreachable_conflict_family();
    OptimalityCertificate cert = strong_check(fam, sample_all(fam));
    CHECK(cert.verdict == Verdict::Unknown);
}

TEST_CASE("exact check certifies the unreachable-conflict family") {
    MdpFamily fam = unreachable_conflict_family();
    EmpiricalSample sample = sample_all(fam);
    OptimalityCertificate cert = exact_check(fam, sample);
    CHECK(cert.verdict == Verdict::SharedOptimal);
    REQUIRE(cert.per_theta_values.size() == 2);
    CHECK(std::abs(cert.per_theta_values[0].second - 1.0) <= 1e-9);
    CHECK(std::abs(cert.per_theta_values[1].second - 1.0) <= 1e-9);
    CHECK(cert.policy.action[0] == 0);
    CHECK(cert.budget_spent > 0);
    // The certified policy re-verifies under an independent value check.
    VerifyResult verify = verify_shared_optimal(cert.policy, fam, sample, cert.slack);
    CHECK(verify.ok);
}

TEST_CASE("exact check reports a reachable conflict with evidence") {
    MdpFamily fam = bandit_family({bandit_theta(0, 1, 0), bandit_theta(1, 0, 1)});
    EmpiricalSample sample = sample_all(fam);
    OptimalityCertificate cert = exact_check(fam, sample);
    CHECK(cert.verdict == Verdict::Conflict);
    REQUIRE(cert.witness.has_value());
    const ConflictWitness& w = *cert.witness;
    CHECK(w.state == 0);
    REQUIRE(w.per_theta_argmax.size() == 2);
    CHECK(w.per_theta_argmax[0].second == std::vector<int>{0});
    CHECK(w.per_theta_argmax[1].second == std::vector<int>{1});
    REQUIRE(w.reachability_evidence.size() == 2);  // both members reach the start
    for (const auto& [theta, path] : w.reachability_evidence) {
        REQUIRE_FALSE(path.empty());
        CHECK(path.back() == w.state);
    }
}

TEST_CASE("exact check returns unknown when the budget is exhausted") {
    MdpFamily fam = bandit_family({bandit_theta(0, 1, 0), bandit_theta(1, 0, 1)});
    OptimalityCertificate cert = exact_check(fam, sample_all(fam), 1e-9, kDefaultSlack,
                                             /*budget=*/1);
    CHECK(cert.verdict == Verdict::Unknown);
    CHECK(cert.budget_spent >= 1);
    CHECK_FALSE(cert.witness.has_value());
}

TEST_CASE("exact check agrees with exhaustive policy search on random families") {
    int shared_count = 0;
    for (std::uint64_t inst = 0; inst < 30; ++inst) {
        std::uint64_t seed = derive_seed(2024, "exact-vs-brute", inst);
        std::vector<Theta> thetas;
        auto members = std::make_shared<std::vector<TabularMdp>>();
        for (std::uint64_t t = 0; t < 3; ++t) {
            thetas.push_back(theta_n(t));
            members->push_back(oracles::make_random_mdp(derive_seed(seed, "member", t), 4, 2,
                                                        0.9, Horizon::unbounded()));
        }
        // Random rewards make true conflicts overwhelmingly likely; mix in
        // copy-families (identical members) so both verdicts get exercised.
        if (inst % 3 == 0)
            for (std::uint64_t t = 1; t < 3; ++t) (*members)[t] = (*members)[0];
        auto build = [members](const Theta& theta) { return (*members)[theta.seed]; };
        MdpFamily fam(ParamSpace::finite(thetas), build, /*shared_spaces=*/true);
        EmpiricalSample sample = sample_all(fam);

        OptimalityCertificate cert = exact_check(fam, sample);
        REQUIRE(cert.verdict != Verdict::Unknown);
        std::vector<TabularMdp> mdps = *members;
        bool expected = brute_force_shared(fam, sample, resolve_slack(kDefaultSlack, mdps));
        CHECK((cert.verdict == Verdict::SharedOptimal) == expected);
        if (cert.verdict == Verdict::SharedOptimal) {
            ++shared_count;
            CHECK(verify_shared_optimal(cert.policy, fam, sample, cert.slack).ok);
        } else {
            REQUIRE(cert.witness.has_value());
            // The witness argmax sets really have an empty intersection.
            std::vector<int> common = cert.witness->per_theta_argmax[0].second;
            for (std::size_t t = 1; t < cert.witness->per_theta_argmax.size(); ++t) {
                std::vector<int> next;
                const auto& other = cert.witness->per_theta_argmax[t].second;
                for (int a : common)
                    if (std::find(other.begin(), other.end(), a) != other.end())
                        next.push_back(a);
                common = std::move(next);
            }
            CHECK(common.empty());
        }
        // The sufficient check may only claim SharedOptimal when the exact one does.
        OptimalityCertificate strong = strong_check(fam, sample);
        if (strong.verdict == Verdict::SharedOptimal)
            CHECK(cert.verdict == Verdict::SharedOptimal);
    }
    CHECK(shared_count >= 10);  // the copy-family instances at least
}

TEST_CASE("verify_shared_optimal reports per-member deficits") {
    MdpFamily fam = bandit_family({bandit_theta(0, 1, 0), bandit_theta(1, 0, 1)});
    EmpiricalSample sample = sample_all(fam);
    DeterministicPolicy pick_first{{0}};
    VerifyResult res = verify_shared_optimal(pick_first, fam, sample, 1e-6);
    CHECK_FALSE(res.ok);
    REQUIRE(res.deficits.size() == 2);
    CHECK(std::abs(res.deficits[0].second) <= 1e-8);        // optimal for the first member
    CHECK(res.deficits[1].second == doctest::Approx(2.0));  // loses everything on the second
    CHECK(verify_shared_optimal(pick_first, fam, sample, kAnySlack).ok);
}

TEST_CASE("slack resolution") {
    TabularMdp loop(1, 1, 0.5, Horizon::unbounded());
    loop.set_reward(0, 0, 1.0);
    loop.add_transition(0, 0, 0, 1.0);
    loop.set_start_dirac(0);
    CHECK(resolve_slack(0.25, {loop}) == 0.25);
    CHECK(resolve_slack(kDefaultSlack, {loop}) == doctest::Approx(1e-8 * 3.0));
}

TEST_CASE("checker argument guards") {
    MdpFamily fam = bandit_family({bandit_theta(0, 1, 0)});
    EmpiricalSample empty;
    CHECK_THROWS_AS(exact_check(fam, empty), EmptySample);
    CHECK_THROWS_AS(strong_check(fam, empty), EmptySample);

    // Finite-horizon members must be time-folded before checking.
    auto finite_build = [](const Theta&) {
        TabularMdp mdp(1, 1, 1.0, Horizon::finite(2));
        mdp.set_reward(0, 0, 1.0);
        mdp.add_transition(0, 0, 0, 1.0);
        mdp.set_start_dirac(0);
        return mdp;
    };
    MdpFamily finite_fam(ParamSpace::finite({theta_n(0)}), finite_build, /*shared_spaces=*/true);
    CHECK_THROWS_AS(exact_check(finite_fam, sample_all(finite_fam)), InvalidMdp);

    // Families without the shared-space assertion are rejected.
    auto loop_build = [](const Theta&) {
        TabularMdp mdp(1, 1, 0.5, Horizon::unbounded());
        mdp.add_transition(0, 0, 0, 1.0);
        mdp.set_start_dirac(0);
        return mdp;
    };
    MdpFamily unshared(ParamSpace::finite({theta_n(0)}), loop_build, /*shared_spaces=*/false);
    CHECK_THROWS_AS(exact_check(unshared, sample_all(unshared)), SpacesNotShared);
}

TEST_CASE("hidden-parameter gridworld: horizontal goals conflict, vertical goals do not") {
    // 3x3 grid, cells indexed y*width + x. Horizontal displacement forces the
    // two members (normal and mirrored) to disagree on the very first move.
    using env_zoo::make_hidden_param_gridworld;
    MdpFamily horizontal = make_hidden_param_gridworld(3, 3, {/*start=*/3, /*goal=*/5});
    OptimalityCertificate conflict = exact_check(horizontal, sample_all(horizontal));
    CHECK(conflict.verdict == Verdict::Conflict);
    REQUIRE(conflict.witness.has_value());
    REQUIRE_FALSE(conflict.witness->reachability_evidence.empty());
    for (const auto& [theta, path] : conflict.witness->reachability_evidence) {
        CHECK(path.front() == 3);  // paths start at the start cell
        CHECK(path.back() == conflict.witness->state);
    }

    // A goal straight down the start's column never needs a horizontal move.
    MdpFamily vertical = make_hidden_param_gridworld(3, 3, {/*start=*/1, /*goal=*/7});
    OptimalityCertificate ok = exact_check(vertical, sample_all(vertical));
    CHECK(ok.verdict == Verdict::SharedOptimal);
    // Two steps down, reward on the third action: value gamma^2.
    for (const auto& [theta, value] : ok.per_theta_values)
        CHECK(std::abs(value - 0.99 * 0.99) <= 1e-8);
}
