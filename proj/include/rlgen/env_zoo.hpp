#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"

/// Bundled environment families: hash-observation and pseudorandom-dynamics
/// hypercube MDPs, and hidden-parameter / goal-variant gridworlds.
///
/// The "one-way" and "pseudorandom" primitives are explicit seeded random
/// tables, not cryptographic constructions: at word sizes m <= 16 a table an
/// agent has not queried is information-theoretically opaque, which is the
/// only property the sample-complexity separations rely on.
namespace rlgen::env_zoo {

/// An m-bit word value; valid values lie in [0, 2^m).
using HypercubeWord = std::uint32_t;

/// Seeded uniform bijection over the m-bit words, with its inverse.
struct KeyedPermutation {
    std::uint64_t master_key = 0;
    int m = 0;
    std::vector<HypercubeWord> forward;
    std::vector<HypercubeWord> inverse;

    HypercubeWord fwd(HypercubeWord x) const { return forward[x]; }
    HypercubeWord inv(HypercubeWord x) const { return inverse[x]; }
};

KeyedPermutation keyed_permutation(std::uint64_t master_key, int m);

/// Seeded uniform lookup table (s, a) -> s' over m-bit words and
/// action_bits-bit actions.
struct KeyedFunction {
    std::uint64_t master_key = 0;
    int m = 0;
    int action_bits = 0;
    std::vector<HypercubeWord> table;  // index (s << action_bits) | a

    HypercubeWord eval(HypercubeWord s, HypercubeWord a) const {
        return table[(static_cast<std::size_t>(s) << action_bits) | a];
    }
};

KeyedFunction keyed_function(std::uint64_t master_key, int m, int action_bits);

/// Per-theta episode data shared by both hypercube families.
struct HypercubeEpisodeSpec {
    HypercubeWord goal = 0;   // c revealed on the goal channel at episode start
    HypercubeWord start = 0;  // fixed start word drawn from the theta seed
    int horizon = 1;
};

HypercubeEpisodeSpec hypercube_spec(const family::Theta& theta, int horizon);

/// Hash-observation family: the observation is o = w(s) for a keyed bijection
/// w, observation dynamics are o' = o XOR a, reward 1 fires on arriving at the
/// goal word and ends the episode. Exact tables exist for m <= 10 (the tabular
/// form adds one absorbing terminal state 2^m so that "episode ends" is
/// representable; rewards sit on arrival transitions). horizon 0 means the
/// default T = m^2.
family::MdpFamily make_hash_family(int m, std::uint64_t master_key, int horizon = 0);

/// Pseudorandom-dynamics family: states observed directly, s' = F(s, a) for a
/// keyed uniform table F, same goal reward convention as the hash family.
family::MdpFamily make_prf_family(int m, std::uint64_t master_key, int action_bits,
                                  int horizon = 0);

struct GridGoalSpec {
    int start_cell = 0;
    int goal_cell = 0;
};

/// Two-member gridworld {normal, mirrored} with the theta hidden from the
/// observation: cells observed by index, actions {left, right, up, down},
/// mirrored members swap the effects of left and right. Reward 1 is collected
/// once at the goal cell, which then drops into an absorbing zero-reward sink;
/// gamma = 0.99, unbounded horizon.
family::MdpFamily make_hidden_param_gridworld(int width, int height, GridGoalSpec spec,
                                              int step_cap = 500);

/// Generative single-theta-axis gridworld: each theta draws a goal cell
/// uniformly from the non-start cells; the goal is NOT exposed on the goal
/// channel, so one observation-keyed policy must serve all goals.
family::MdpFamily make_goal_variant_gridworld(int width, int height, int start_cell,
                                              std::uint64_t master_seed, int step_cap = 500);

/// Exact tables for one member (alias for family.member with the zoo's caps:
/// hypercube families throw CapExceeded above m = 10).
TabularMdp to_tabular(const family::MdpFamily& fam, const family::Theta& theta);

}  // namespace rlgen::env_zoo
