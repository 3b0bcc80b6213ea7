#pragma once

#include <cstdint>
#include <vector>

#include "rlgen/mdp.hpp"

/// Brute-force reference implementations kept deliberately independent of the
/// main dynamic-programming code paths: dense matrices instead of sparse rows,
/// Gauss-Jordan instead of pivoted elimination, explicit rollouts instead of
/// fixed-point sweeps. They exist to certify the fast paths and to emit golden
/// files (bench oracle subcommand), so sharing code with the functions under
/// test would defeat their purpose.
namespace rlgen::oracles {

/// Start-weighted value of a deterministic policy, dense solve / backward induction.
double policy_value(const TabularMdp& mdp, const DeterministicPolicy& policy);

/// Start-weighted value of a softmax policy, dense solve / backward induction.
double policy_value(const TabularMdp& mdp, const SoftmaxPolicy& policy);

struct EnumerationResult {
    double best_value;
    DeterministicPolicy best_policy;  // lowest lexicographic among maximizers
    std::uint64_t policies_evaluated;
};

/// Evaluates every one of the |A|^|S| deterministic policies. Throws
/// CapExceeded when that count exceeds `cap`.
EnumerationResult enumerate_policies(const TabularMdp& mdp, std::uint64_t cap = 2000000);

/// Central finite differences of the start-weighted softmax value over logits.
std::vector<double> fd_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                double step = 1e-5);

struct McEstimate {
    double mean;
    double stderr_mean;
    std::uint64_t episodes;
};

/// Monte-Carlo rollout estimate of the start-weighted discounted return.
McEstimate mc_policy_value(const TabularMdp& mdp, const DeterministicPolicy& policy,
                           std::uint64_t episodes, std::uint64_t seed);

/// Random test instances, deterministic in the seed.
TabularMdp make_random_mdp(std::uint64_t seed, int num_states, int num_actions, double discount,
                           Horizon horizon, int branching = 3);

SoftmaxPolicy make_random_logits(std::uint64_t seed, int num_states, int num_actions,
                                 double scale = 1.0);

}  // namespace rlgen::oracles
