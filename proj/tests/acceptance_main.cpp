// Acceptance gate: one self-contained criterion per numbered check, each
// printing a single PASS/FAIL line with its measured statistic and runtime.
// Exit status is the number of failed criteria. Tolerances and budgets are
// pinned here as constants on purpose: loosening them is a visible diff.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "rlgen/agents.hpp"
#include "rlgen/bench.hpp"
#include "rlgen/env_zoo.hpp"
#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"
#include "rlgen/optimality.hpp"
#include "rlgen/oracles.hpp"
#include "rlgen/rng.hpp"
#include "rlgen/wrappers.hpp"

using namespace rlgen;

namespace {

// Pinned tolerances.
constexpr double kViVsEnumTol = 1e-6;         // criterion 1
constexpr double kGradRelTol = 1e-4;          // criterion 2
constexpr double kUnwrapValueTol = 1e-8;      // criterion 3
constexpr double kAugmentValueTol = 1e-8;     // criterion 4
constexpr double kMemorizerPopulationCap = 0.02;  // criteria 5 and 6
constexpr double kInverterSigmas = 3.0;       // criterion 5
constexpr double kCoverageFloor = 0.99;       // criterion 6
constexpr double kPlannerSuccessFloor = 0.95; // criterion 6
constexpr double kCosineTol = 1e-9;           // criterion 7
constexpr double kCosineScaleTol = 1e-12;     // criterion 7

struct Outcome {
    bool ok = false;
    std::string detail;
};

struct Criterion {
    const char* description;
    double time_budget_seconds;
    std::function<Outcome()> run;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double start_value_of(const TabularMdp& mdp, const std::vector<double>& v) {
    double total = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) total += mdp.start_dist()[s] * v[s];
    return total;
}

double vi_start_value(const TabularMdp& mdp) {
    return start_value_of(mdp, value_iteration(mdp, 1e-12).v);
}

family::Theta hyper_theta(std::uint64_t seed, std::int64_t goal, std::int64_t start) {
    family::Theta t;
    t.seed = seed;
    t.fields["goal"] = goal;
    t.fields["start"] = start;
    return t;
}

family::EmpiricalSample sample_of(std::vector<family::Theta> thetas) {
    family::EmpiricalSample s;
    s.thetas = std::move(thetas);
    s.label = "acceptance";
    return s;
}

// ---------------------------------------------------------------------------
// 1. Value iteration vs exhaustive policy enumeration.

Outcome criterion1() {
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 200; ++i) {
        const std::uint64_t seed = derive_seed(1001, "c1", i);
        auto dims = make_rng(seed, "dims");
        const int states = 2 + static_cast<int>(uniform_below(dims, 5));
        const int actions = 1 + static_cast<int>(uniform_below(dims, 3));
        const TabularMdp mdp = oracles::make_random_mdp(derive_seed(seed, "mdp"), states, actions,
                                                        0.9, Horizon::unbounded());
        const double vi = vi_start_value(mdp);
        const double best = oracles::enumerate_policies(mdp).best_value;
        worst = std::max(worst, std::abs(vi - best));
    }
    return {worst <= kViVsEnumTol,
            "200 instances, max |vi - enum| " + fmt(worst) + " vs " + fmt(kViVsEnumTol)};
}

// ---------------------------------------------------------------------------
// 2. Exact policy gradient vs central finite differences.

Outcome criterion2() {
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 50; ++i) {
        const std::uint64_t seed = derive_seed(1002, "c2", i);
        auto dims = make_rng(seed, "dims");
        const int states = 2 + static_cast<int>(uniform_below(dims, 5));
        const int actions = 2 + static_cast<int>(uniform_below(dims, 2));
        const TabularMdp mdp = oracles::make_random_mdp(derive_seed(seed, "mdp"), states, actions,
                                                        0.9, Horizon::unbounded());
        const SoftmaxPolicy policy =
            oracles::make_random_logits(derive_seed(seed, "logits"), states, actions);
        const std::vector<double> exact = exact_policy_gradient(mdp, policy);
        const std::vector<double> approx = oracles::fd_gradient(mdp, policy);
        // Mixed absolute/relative agreement: error over (1e-4 + linf) holds real
        // gradients to a relative comparison and an all-zero gradient to 1e-8 abs.
        double linf = 0.0;
        double max_abs = 0.0;
        for (std::size_t c = 0; c < exact.size(); ++c) {
            linf = std::max(linf, std::abs(approx[c]));
            max_abs = std::max(max_abs, std::abs(exact[c] - approx[c]));
        }
        worst = std::max(worst, max_abs / (1e-4 + linf));
    }
    return {worst <= kGradRelTol,
            "50 instances, max relative error " + fmt(worst) + " vs " + fmt(kGradRelTol)};
}

// ---------------------------------------------------------------------------
// 3. Seed unwrapping preserves the optimal policy across all members.

Outcome criterion3() {
    double worst = 0.0;
    int shared = 0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const std::uint64_t seed = derive_seed(1003, "c3", i);
        auto dims = make_rng(seed, "dims");
        const int states = 3 + static_cast<int>(uniform_below(dims, 3));
        const int actions = 2 + static_cast<int>(uniform_below(dims, 2));
        const TabularMdp mdp = oracles::make_random_mdp(derive_seed(seed, "mdp"), states, actions,
                                                        0.9, Horizon::unbounded());
        std::vector<std::uint64_t> member_seeds;
        for (std::uint64_t j = 0; j < 8; ++j) member_seeds.push_back(derive_seed(seed, "member", j));
        const family::MdpFamily fam =
            family::unwrap_seeds(mdp, member_seeds, family::UnwrapDepth::initial_only());

        const DeterministicPolicy pi_star = greedy_policy(value_iteration(mdp, 1e-12));
        for (const family::Theta& theta : fam.params().thetas()) {
            const TabularMdp member = fam.member(theta);
            const double achieved = policy_evaluation(member, pi_star, EvalMethod::Auto).episode_reward;
            worst = std::max(worst, std::abs(achieved - vi_start_value(member)));
        }
        const auto cert = optimality::exact_check(fam, sample_of(fam.params().thetas()));
        if (cert.verdict == optimality::Verdict::SharedOptimal) ++shared;
    }
    const bool ok = worst <= kUnwrapValueTol && shared == 100;
    return {ok, "100 instances x 8 members, max value deficit " + fmt(worst) + " vs " +
                    fmt(kUnwrapValueTol) + ", SharedOptimal " + std::to_string(shared) + "/100"};
}

// ---------------------------------------------------------------------------
// 4. Gridworld conflict, theta-augmentation recovery, vertical control.

Outcome criterion4() {
    // Horizontal mirrored goal: provably no shared optimal observation policy.
    const family::MdpFamily horizontal =
        env_zoo::make_hidden_param_gridworld(5, 5, {/*start=*/11, /*goal=*/13});
    const family::EmpiricalSample both = sample_of(horizontal.params().thetas());
    const auto conflict = optimality::exact_check(horizontal, both);
    if (conflict.verdict != optimality::Verdict::Conflict || !conflict.witness) {
        return {false, "expected Conflict on the mirrored horizontal goal"};
    }

    // Tagging observations with the member index restores shared optimality.
    const family::MdpFamily augmented = wrappers::augment_with_theta(horizontal, both);
    const auto restored = optimality::exact_check(augmented, both);
    if (restored.verdict != optimality::Verdict::SharedOptimal) {
        return {false, "expected SharedOptimal after theta augmentation"};
    }
    const double expect = 0.99 * 0.99;  // two moves, reward on the arrival action
    double worst = 0.0;
    for (const auto& [theta, value] : restored.per_theta_values) {
        worst = std::max(worst, std::abs(value - expect));
    }
    if (worst > kAugmentValueTol) {
        return {false, "augmented start values off by " + fmt(worst)};
    }

    // A vertically displaced goal is mirror-invariant: no wrapper needed.
    const family::MdpFamily vertical =
        env_zoo::make_hidden_param_gridworld(5, 5, {/*start=*/2, /*goal=*/22});
    const auto control = optimality::exact_check(vertical, sample_of(vertical.params().thetas()));
    if (control.verdict != optimality::Verdict::SharedOptimal) {
        return {false, "expected SharedOptimal for the vertical control"};
    }
    return {true, "Conflict -> theta-augmented SharedOptimal (start values within " + fmt(worst) +
                      "), vertical control SharedOptimal"};
}

// ---------------------------------------------------------------------------
// 5. Hash family: memorizer memorizes, table inverter generalizes.

Outcome criterion5() {
    const family::MdpFamily fam = env_zoo::make_hash_family(8, 4242);
    auto [train_sample, eval_sample] = family::sample_split(fam.params(), 32, 2000, 55);

    agents::MemorizerAgent memorizer({/*search_budget=*/1024});
    agents::train(memorizer, fam, train_sample, 640, derive_seed(5001, "memorizer"));
    const double mem_train = agents::evaluate(memorizer, fam, train_sample).mean;
    const double mem_pop = agents::evaluate(memorizer, fam, eval_sample).mean;
    if (mem_train != 1.0) {
        return {false, "memorizer failed to solve its training set (j_train " + fmt(mem_train) + ")"};
    }
    if (mem_pop > kMemorizerPopulationCap) {
        return {false, "memorizer population reward " + fmt(mem_pop) + " above " +
                           fmt(kMemorizerPopulationCap)};
    }

    agents::TableInverterAgent inverter({/*search_budget=*/1024});
    agents::train(inverter, fam, train_sample, 640, derive_seed(5001, "inverter"));
    const double inv_train = agents::evaluate(inverter, fam, train_sample).mean;
    const double inv_pop = agents::evaluate(inverter, fam, eval_sample).mean;
    const double p = static_cast<double>(inverter.known_goals()) / 256.0;
    const double se = std::sqrt(p * (1.0 - p) / 2000.0);
    const bool inv_ok = inv_train == 1.0 && std::abs(inv_pop - p) <= kInverterSigmas * se;
    if (!inv_ok) {
        return {false, "inverter j_train " + fmt(inv_train) + ", population " + fmt(inv_pop) +
                           " vs predicted " + fmt(p) + " +/- " + fmt(kInverterSigmas * se)};
    }
    return {true, "memorizer 1 -> " + fmt(mem_pop) + "; inverter knows " +
                      std::to_string(inverter.known_goals()) +
                      "/256 goals, population " + fmt(inv_pop) + " ~ " + fmt(p)};
}

// ---------------------------------------------------------------------------
// 6. Pseudorandom dynamics: model learner plans, memorizer does not transfer.

Outcome criterion6() {
    const family::MdpFamily fam = env_zoo::make_prf_family(8, 777, /*action_bits=*/8);
    auto [train_sample, eval_sample] = family::sample_split(fam.params(), 32, 2000, 66);

    agents::ModelLearnerAgent learner;
    agents::train(learner, fam, train_sample, 3000, derive_seed(6001, "learner"));
    const double coverage = learner.coverage(256, 256);
    if (coverage < kCoverageFloor) {
        return {false, "model coverage " + fmt(coverage) + " below " + fmt(kCoverageFloor)};
    }

    // Ground-truth successors, probed through the simulator, for conditioning
    // evaluation success on true reachability within the horizon.
    std::vector<std::vector<int>> succ(256);
    for (int s = 0; s < 256; ++s) {
        succ[s].reserve(256);
        for (int a = 0; a < 256; ++a) {
            auto sim = fam.sim(hyper_theta(1, s, s));
            sim->reset(0);
            succ[s].push_back(static_cast<int>(sim->step(a).view));
        }
    }
    std::map<int, std::vector<int>> dist_from_start;  // start -> per-goal distance, -1 unreachable
    auto distances = [&succ](int start) {
        std::vector<int> dist(256, -1);
        std::vector<int> queue;
        for (int n : succ[start]) {
            if (dist[n] < 0) {
                dist[n] = 1;  // nonempty paths only: reward fires on arrival
                queue.push_back(n);
            }
        }
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const int u = queue[head];
            for (int n : succ[u]) {
                if (dist[n] < 0) {
                    dist[n] = dist[u] + 1;
                    queue.push_back(n);
                }
            }
        }
        return dist;
    };

    const agents::EvalResult eval = agents::evaluate(learner, fam, eval_sample);
    int reachable = 0;
    int solved = 0;
    for (std::size_t i = 0; i < eval_sample.thetas.size(); ++i) {
        const int start = static_cast<int>(eval_sample.thetas[i].field("start"));
        const int goal = static_cast<int>(eval_sample.thetas[i].field("goal"));
        auto it = dist_from_start.find(start);
        if (it == dist_from_start.end()) it = dist_from_start.emplace(start, distances(start)).first;
        const int d = it->second[static_cast<std::size_t>(goal)];
        if (d >= 1 && d <= 64) {
            ++reachable;
            if (eval.per_episode[i] == 1.0) ++solved;
        }
    }
    const double success = reachable == 0 ? 0.0 : static_cast<double>(solved) / reachable;
    if (success < kPlannerSuccessFloor) {
        return {false, "planner success " + fmt(success) + " on " + std::to_string(reachable) +
                           " reachable members, below " + fmt(kPlannerSuccessFloor)};
    }

    agents::MemorizerAgent memorizer({1024});
    agents::train(memorizer, fam, train_sample, 640, derive_seed(6001, "memorizer"));
    const double mem_pop = agents::evaluate(memorizer, fam, eval_sample).mean;
    if (mem_pop > kMemorizerPopulationCap) {
        return {false, "memorizer population reward " + fmt(mem_pop) + " above " +
                           fmt(kMemorizerPopulationCap)};
    }
    return {true, "coverage " + fmt(coverage) + ", planner " + std::to_string(solved) + "/" +
                      std::to_string(reachable) + " reachable, memorizer " + fmt(mem_pop)};
}

// ---------------------------------------------------------------------------
// 7. Gradient cosine similarity calibration.

Outcome criterion7() {
    auto bandit_theta = [](std::uint64_t seed, std::int64_t r0, std::int64_t r1) {
        family::Theta t;
        t.seed = seed;
        t.fields["r0"] = r0;
        t.fields["r1"] = r1;
        return t;
    };
    const family::Theta a = bandit_theta(1, 1, 0);
    const family::Theta b = bandit_theta(2, 0, 1);
    const family::Theta a_scaled = bandit_theta(3, 2, 0);
    auto build = [](const family::Theta& theta) {
        TabularMdp mdp(1, 2, 1.0, Horizon::finite(1));
        mdp.set_reward(0, 0, static_cast<double>(theta.field("r0")));
        mdp.set_reward(0, 1, static_cast<double>(theta.field("r1")));
        mdp.add_transition(0, 0, 0, 1.0);
        mdp.add_transition(0, 1, 0, 1.0);
        mdp.set_start_dirac(0);
        mdp.validate();
        return mdp;
    };
    const family::MdpFamily fam(family::ParamSpace::finite({a, b, a_scaled}), build, true);
    const SoftmaxPolicy uniform(1, 2);

    const double same = agents::gcs(uniform, fam, sample_of({a}), sample_of({a}));
    const double opposed = agents::gcs(uniform, fam, sample_of({a}), sample_of({b}));
    const double scaled = agents::gcs(uniform, fam, sample_of({a}), sample_of({a_scaled}));
    const bool ok = std::abs(same - 1.0) <= kCosineTol && std::abs(opposed + 1.0) <= kCosineTol &&
                    std::abs(scaled - 1.0) <= kCosineScaleTol;
    return {ok, "aligned " + fmt(same) + ", opposed " + fmt(opposed) + ", rescaled member " +
                    fmt(scaled)};
}

// ---------------------------------------------------------------------------
// 8. More training goals shrink the q-learning generalization gap.

Outcome criterion8() {
    const family::MdpFamily fam = env_zoo::make_goal_variant_gridworld(5, 5, /*start_cell=*/0, 8801);
    auto gap_for = [&fam](int n_train, std::uint64_t repeat) {
        const std::uint64_t seed =
            derive_seed(8001, "c8", repeat * 2 + (n_train > 16 ? 1 : 0));
        auto split = family::sample_split(fam.params(), n_train, 64, derive_seed(seed, "split"));
        agents::QLearningAgent agent({/*alpha=*/0.25, /*epsilon=*/0.15, /*optimistic=*/0.0});
        agents::train(agent, fam, split.first, 1500, derive_seed(seed, "train"));
        const double j_train = agents::evaluate(agent, fam, split.first).mean;
        const double j_pop = agents::evaluate(agent, fam, split.second).mean;
        return j_train - j_pop;
    };
    std::vector<double> small_gaps, large_gaps;
    for (std::uint64_t r = 0; r < 20; ++r) {
        small_gaps.push_back(gap_for(4, r));
        large_gaps.push_back(gap_for(64, r));
    }
    auto median = [](std::vector<double> xs) {
        std::sort(xs.begin(), xs.end());
        return 0.5 * (xs[xs.size() / 2 - 1] + xs[xs.size() / 2]);
    };
    const double small_median = median(small_gaps);
    const double large_median = median(large_gaps);
    return {large_median < small_median,
            "20 repeats, median gap n_train=4: " + fmt(small_median) +
                ", n_train=64: " + fmt(large_median)};
}

// ---------------------------------------------------------------------------
// 9. Byte-identical runner outputs across worker counts.

Outcome criterion9() {
    namespace fs = std::filesystem;
    const fs::path dir = "acceptance-out";
    fs::remove_all(dir);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };

    const nlohmann::json gap_doc{
        {"schema_version", 1},
        {"run_id", "det-gap"},
        {"master_seed", 17},
        {"env",
         {{"family", "gridworld_hidden"},
          {"width", 3},
          {"height", 3},
          {"start_cell", 0},
          {"goal_cell", 8}}},
        {"agent", {{"kind", "q_learning"}, {"alpha", 0.5}, {"epsilon", 0.2}}},
        {"n_train", 1},
        {"n_eval", 1},
        {"episodes", 80},
        {"repeats", 4},
        {"output_dir", dir.string()}};
    const nlohmann::json sweep_doc{
        {"schema_version", 1},
        {"run_id", "det-sweep"},
        {"master_seed", 18},
        {"env",
         {{"family", "gridworld_goals"},
          {"width", 4},
          {"height", 4},
          {"start_cell", 0},
          {"key", 9}}},
        {"agent", {{"kind", "q_learning"}}},
        {"n_train", 2},
        {"n_eval", 4},
        {"episodes", 60},
        {"repeats", 2},
        {"output_dir", dir.string()},
        {"sweep", {{"axis", "n_train"}, {"values", {2, 4}}}}};

    const bench::RunConfig gap_cfg = bench::RunConfig::parse(gap_doc);
    const bench::RunConfig sweep_cfg = bench::RunConfig::parse(sweep_doc);
    bool ok = bench::run_gap(gap_cfg, {1, "", 0}) == 0 &&
              bench::run_sweep(sweep_cfg, {1, "", 0}) == 0;
    const std::string gap_one = slurp(dir / "det-gap.csv");
    const std::string sweep_one = slurp(dir / "det-sweep.csv");
    const std::string summary_one = slurp(dir / "det-sweep.summary.json");
    ok = ok && bench::run_gap(gap_cfg, {8, "", 0}) == 0 &&
         bench::run_sweep(sweep_cfg, {8, "", 0}) == 0;
    const bool identical = slurp(dir / "det-gap.csv") == gap_one &&
                           slurp(dir / "det-sweep.csv") == sweep_one &&
                           slurp(dir / "det-sweep.summary.json") == summary_one;
    fs::remove_all(dir);
    if (!ok) return {false, "runner returned a nonzero exit code"};
    if (!identical) return {false, "outputs differ between 1 and 8 workers"};
    return {true, "gap and sweep outputs byte-identical at 1 and 8 workers"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"value iteration matches exhaustive policy enumeration", 10.0, criterion1},
        {"exact policy gradients match central finite differences", 30.0, criterion2},
        {"seed unwrapping keeps the base optimal policy optimal for every member", 30.0,
         criterion3},
        {"mirrored gridworld: Conflict, recovered by theta augmentation, vertical control clean",
         5.0, criterion4},
        {"hash family separates the memorizer from the table inverter", 60.0, criterion5},
        {"pseudorandom dynamics separate the memorizer from the model-based planner", 120.0,
         criterion6},
        {"gradient cosine similarity hits its calibration points", 5.0, criterion7},
        {"larger goal-variant training sets shrink the median q-learning gap", 120.0, criterion8},
        {"runner outputs are byte-identical across worker counts", 60.0, criterion9},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const Criterion& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool ok = outcome.ok;
        std::string note = outcome.detail;
        if (elapsed > c.time_budget_seconds) {
            ok = false;
            note += " [over the " + fmt(c.time_budget_seconds) + "s budget]";
        }
        std::printf("%s | criterion %zu: %s (%s, %.2fs)\n", ok ? "PASS" : "FAIL", i + 1,
                    c.description, note.c_str(), elapsed);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0) {
        std::printf("all %zu acceptance criteria passed\n", criteria.size());
    } else {
        std::printf("%d acceptance criteria failed\n", failures);
    }
    return failures;
}
