#include "rlgen/env_zoo.hpp"

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "rlgen/errors.hpp"
#include "rlgen/rng.hpp"

namespace rlgen::env_zoo {

namespace {

constexpr int kMaxWordBits = 16;   // table sizes stay comfortably in memory
constexpr int kMaxTabularBits = 10;  // exact-table cap: 2^10+1 states, 2^10 actions

void check_word_bits(int m) {
    if (m < 1) throw std::invalid_argument("word size m must be >= 1");
    if (m > kMaxWordBits) {
        throw MTooLarge("word size m = " + std::to_string(m) + " exceeds the cap " +
                        std::to_string(kMaxWordBits));
    }
}

int resolve_horizon(int m, int horizon) {
    if (horizon < 0) throw std::invalid_argument("horizon must be >= 1 (0 selects the default)");
    if (horizon == 0) return m * m;
    return horizon;
}

/// Uniform theta sampler shared by both hypercube families: goal and start
/// words drawn from independent derived streams.
family::Theta sample_hypercube_theta(std::uint64_t seed, int m) {
    family::Theta theta;
    theta.seed = seed;
    const std::uint64_t words = std::uint64_t{1} << m;
    auto goal_rng = make_rng(seed, "goal");
    theta.fields["goal"] = static_cast<std::int64_t>(uniform_below(goal_rng, words));
    auto start_rng = make_rng(seed, "start");
    theta.fields["start"] = static_cast<std::int64_t>(uniform_below(start_rng, words));
    return theta;
}

/// Exact tables for one hypercube member given its successor map. The word
/// graph is augmented with one absorbing terminal state 2^m; every transition
/// that arrives at the goal word instead pays reward 1 and drops to the
/// terminal, which makes "reward once, then stop" an ordinary finite-horizon
/// table without changing any achievable return.
template <typename NextFn>
TabularMdp tabularize_hypercube(int m, int num_actions, int horizon, const family::Theta& theta,
                                NextFn&& next_word) {
    if (m > kMaxTabularBits) {
        throw CapExceeded("exact tables are limited to m <= " + std::to_string(kMaxTabularBits) +
                          " (2^m + 1 states); m = " + std::to_string(m) + " is sim-only");
    }
    const int words = 1 << m;
    const int terminal = words;
    const auto goal = static_cast<HypercubeWord>(theta.field("goal"));
    const auto start = static_cast<HypercubeWord>(theta.field("start"));
    TabularMdp mdp(words + 1, num_actions, 1.0, Horizon::finite(horizon));
    for (int s = 0; s < words; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            const HypercubeWord s2 = next_word(static_cast<HypercubeWord>(s),
                                               static_cast<HypercubeWord>(a));
            if (s2 == goal) {
                mdp.set_reward(s, a, 1.0);
                mdp.add_transition(s, a, terminal, 1.0);
            } else {
                mdp.add_transition(s, a, static_cast<int>(s2), 1.0);
            }
        }
    }
    for (int a = 0; a < num_actions; ++a) mdp.add_transition(terminal, a, terminal, 1.0);
    mdp.set_start_dirac(static_cast<int>(start));
    mdp.validate();
    return mdp;
}

/// Episode simulator for the hash-observation family.
class HashSim : public family::EpisodeSim {
public:
    HashSim(std::shared_ptr<const KeyedPermutation> perm, HypercubeEpisodeSpec spec)
        : perm_(std::move(perm)), spec_(spec) {}

    int num_actions() const override { return 1 << perm_->m; }
    int max_steps() const override { return spec_.horizon; }
    double discount() const override { return 1.0; }

    family::SimObservation reset(std::uint64_t /*episode_seed*/) override {
        state_ = spec_.start;
        return {perm_->fwd(state_), spec_.goal};
    }

    family::SimStepResult step(int action) override {
        const HypercubeWord obs = perm_->fwd(state_) ^ static_cast<HypercubeWord>(action);
        state_ = perm_->inv(obs);
        const bool arrived = state_ == spec_.goal;
        return {obs, arrived ? 1.0 : 0.0, arrived};
    }

private:
    std::shared_ptr<const KeyedPermutation> perm_;
    HypercubeEpisodeSpec spec_;
    HypercubeWord state_ = 0;
};

/// Episode simulator for the pseudorandom-dynamics family (states observed
/// directly).
class PrfSim : public family::EpisodeSim {
public:
    PrfSim(std::shared_ptr<const KeyedFunction> fn, HypercubeEpisodeSpec spec)
        : fn_(std::move(fn)), spec_(spec) {}

    int num_actions() const override { return 1 << fn_->action_bits; }
    int max_steps() const override { return spec_.horizon; }
    double discount() const override { return 1.0; }

    family::SimObservation reset(std::uint64_t /*episode_seed*/) override {
        state_ = spec_.start;
        return {state_, spec_.goal};
    }

    family::SimStepResult step(int action) override {
        state_ = fn_->eval(state_, static_cast<HypercubeWord>(action));
        const bool arrived = state_ == spec_.goal;
        return {state_, arrived ? 1.0 : 0.0, arrived};
    }

private:
    std::shared_ptr<const KeyedFunction> fn_;
    HypercubeEpisodeSpec spec_;
    HypercubeWord state_ = 0;
};

int clamp_axis(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

/// Deterministic clamped move on a width x height grid. Actions are
/// 0 = left, 1 = right, 2 = up, 3 = down; mirrored members swap the effects
/// of left and right (vertical moves are unaffected).
int grid_move(int cell, int action, int width, int height, bool mirrored) {
    int x = cell % width;
    int y = cell / width;
    int a = action;
    if (mirrored && (a == 0 || a == 1)) a ^= 1;
    switch (a) {
        case 0: x = clamp_axis(x - 1, 0, width - 1); break;
        case 1: x = clamp_axis(x + 1, 0, width - 1); break;
        case 2: y = clamp_axis(y - 1, 0, height - 1); break;
        case 3: y = clamp_axis(y + 1, 0, height - 1); break;
        default: throw std::invalid_argument("grid action out of range");
    }
    return y * width + x;
}

constexpr double kGridDiscount = 0.99;

/// One gridworld member: cells plus an absorbing sink. Every action at the
/// goal cell pays 1 and drops to the sink, so the reward is collected exactly
/// once; all other moves are deterministic clamped steps.
TabularMdp build_grid_member(int width, int height, const family::Theta& theta) {
    const int cells = width * height;
    const int sink = cells;
    const int goal = static_cast<int>(theta.field("goal"));
    const int start = static_cast<int>(theta.field("start"));
    const bool mirrored = theta.field("mirror") != 0;
    TabularMdp mdp(cells + 1, 4, kGridDiscount, Horizon::unbounded());
    for (int cell = 0; cell < cells; ++cell) {
        for (int a = 0; a < 4; ++a) {
            if (cell == goal) {
                mdp.set_reward(cell, a, 1.0);
                mdp.add_transition(cell, a, sink, 1.0);
            } else {
                mdp.add_transition(cell, a, grid_move(cell, a, width, height, mirrored), 1.0);
            }
        }
    }
    for (int a = 0; a < 4; ++a) mdp.add_transition(sink, a, sink, 1.0);
    mdp.set_start_dirac(start);
    mdp.validate();
    return mdp;
}

void check_grid(int width, int height) {
    if (width < 1 || height < 1 || width * height < 2) {
        throw DegenerateGrid("grid needs at least two cells: " + std::to_string(width) + "x" +
                             std::to_string(height));
    }
}

void check_grid_cell(int cell, int cells, const char* what) {
    if (cell < 0 || cell >= cells) {
        throw DegenerateGrid(std::string(what) + " cell " + std::to_string(cell) +
                             " outside the grid (" + std::to_string(cells) + " cells)");
    }
}

}  // namespace

KeyedPermutation keyed_permutation(std::uint64_t master_key, int m) {
    check_word_bits(m);
    KeyedPermutation perm;
    perm.master_key = master_key;
    perm.m = m;
    const std::size_t words = std::size_t{1} << m;
    perm.forward.resize(words);
    std::iota(perm.forward.begin(), perm.forward.end(), HypercubeWord{0});
    auto rng = make_rng(master_key, "keyed-permutation");
    shuffle_vec(perm.forward, rng);
    perm.inverse.resize(words);
    for (std::size_t x = 0; x < words; ++x) perm.inverse[perm.forward[x]] = static_cast<HypercubeWord>(x);
    return perm;
}

KeyedFunction keyed_function(std::uint64_t master_key, int m, int action_bits) {
    check_word_bits(m);
    if (action_bits < 1 || action_bits > m) {
        throw std::invalid_argument("action_bits must lie in [1, m]");
    }
    KeyedFunction fn;
    fn.master_key = master_key;
    fn.m = m;
    fn.action_bits = action_bits;
    const std::size_t entries = std::size_t{1} << (m + action_bits);
    fn.table.resize(entries);
    auto rng = make_rng(master_key, "keyed-function");
    const std::uint64_t words = std::uint64_t{1} << m;
    for (std::size_t i = 0; i < entries; ++i) {
        fn.table[i] = static_cast<HypercubeWord>(uniform_below(rng, words));
    }
    return fn;
}

HypercubeEpisodeSpec hypercube_spec(const family::Theta& theta, int horizon) {
    HypercubeEpisodeSpec spec;
    spec.goal = static_cast<HypercubeWord>(theta.field("goal"));
    spec.start = static_cast<HypercubeWord>(theta.field("start"));
    spec.horizon = horizon;
    return spec;
}

family::MdpFamily make_hash_family(int m, std::uint64_t master_key, int horizon) {
    check_word_bits(m);
    const int T = resolve_horizon(m, horizon);
    auto perm = std::make_shared<const KeyedPermutation>(
        keyed_permutation(derive_seed(master_key, "hash-perm"), m));
    auto params = family::ParamSpace::generative(
        derive_seed(master_key, "hash-thetas"),
        [m](std::uint64_t seed) { return sample_hypercube_theta(seed, m); });
    auto build = [perm, m, T](const family::Theta& theta) {
        return tabularize_hypercube(m, 1 << m, T, theta, [&perm](HypercubeWord s, HypercubeWord a) {
            return perm->inv(perm->fwd(s) ^ a);
        });
    };
    auto make_sim = [perm, T](const family::Theta& theta) -> std::unique_ptr<family::EpisodeSim> {
        return std::make_unique<HashSim>(perm, hypercube_spec(theta, T));
    };
    return family::MdpFamily(std::move(params), std::move(build), /*shared_spaces=*/true,
                             std::move(make_sim));
}

family::MdpFamily make_prf_family(int m, std::uint64_t master_key, int action_bits, int horizon) {
    check_word_bits(m);
    const int T = resolve_horizon(m, horizon);
    auto fn = std::make_shared<const KeyedFunction>(
        keyed_function(derive_seed(master_key, "prf-table"), m, action_bits));
    auto params = family::ParamSpace::generative(
        derive_seed(master_key, "prf-thetas"),
        [m](std::uint64_t seed) { return sample_hypercube_theta(seed, m); });
    auto build = [fn, m, action_bits, T](const family::Theta& theta) {
        return tabularize_hypercube(m, 1 << action_bits, T, theta,
                                    [&fn](HypercubeWord s, HypercubeWord a) { return fn->eval(s, a); });
    };
    auto make_sim = [fn, T](const family::Theta& theta) -> std::unique_ptr<family::EpisodeSim> {
        return std::make_unique<PrfSim>(fn, hypercube_spec(theta, T));
    };
    return family::MdpFamily(std::move(params), std::move(build), /*shared_spaces=*/true,
                             std::move(make_sim));
}

family::MdpFamily make_hidden_param_gridworld(int width, int height, GridGoalSpec spec,
                                              int step_cap) {
    check_grid(width, height);
    const int cells = width * height;
    check_grid_cell(spec.start_cell, cells, "start");
    check_grid_cell(spec.goal_cell, cells, "goal");
    if (spec.start_cell == spec.goal_cell) {
        throw DegenerateGrid("start and goal cells coincide");
    }
    std::vector<family::Theta> thetas(2);
    for (int i = 0; i < 2; ++i) {
        thetas[i].seed = static_cast<std::uint64_t>(i);
        thetas[i].fields["mirror"] = i;
        thetas[i].fields["goal"] = spec.goal_cell;
        thetas[i].fields["start"] = spec.start_cell;
    }
    auto build = [width, height](const family::Theta& theta) {
        return build_grid_member(width, height, theta);
    };
    auto make_sim = [width, height, step_cap](const family::Theta& theta)
        -> std::unique_ptr<family::EpisodeSim> {
        // Theta (mirror flag and goal) stays hidden: the goal channel is 0.
        return std::make_unique<family::TabularEpisodeSim>(build_grid_member(width, height, theta),
                                                           /*goal_channel=*/0, step_cap);
    };
    return family::MdpFamily(family::ParamSpace::finite(std::move(thetas)), std::move(build),
                             /*shared_spaces=*/true, std::move(make_sim));
}

family::MdpFamily make_goal_variant_gridworld(int width, int height, int start_cell,
                                              std::uint64_t master_seed, int step_cap) {
    check_grid(width, height);
    const int cells = width * height;
    check_grid_cell(start_cell, cells, "start");
    auto sampler = [cells, start_cell](std::uint64_t seed) {
        family::Theta theta;
        theta.seed = seed;
        auto rng = make_rng(seed, "goal");
        // Uniform over the cells other than the start.
        const auto draw = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cells - 1)));
        theta.fields["goal"] = draw >= start_cell ? draw + 1 : draw;
        theta.fields["start"] = start_cell;
        theta.fields["mirror"] = 0;
        return theta;
    };
    auto build = [width, height](const family::Theta& theta) {
        return build_grid_member(width, height, theta);
    };
    auto make_sim = [width, height, step_cap](const family::Theta& theta)
        -> std::unique_ptr<family::EpisodeSim> {
        // The sampled goal is deliberately NOT exposed: goal channel 0.
        return std::make_unique<family::TabularEpisodeSim>(build_grid_member(width, height, theta),
                                                           /*goal_channel=*/0, step_cap);
    };
    return family::MdpFamily(family::ParamSpace::generative(master_seed, std::move(sampler)),
                             std::move(build), /*shared_spaces=*/true, std::move(make_sim));
}

TabularMdp to_tabular(const family::MdpFamily& fam, const family::Theta& theta) {
    return fam.member(theta);
}

}  // namespace rlgen::env_zoo
