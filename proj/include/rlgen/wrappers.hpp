#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"

/// Constructions that restore (or deliberately break) shared optimality:
/// theta-augmentation, history windows, observation obfuscation, and the
/// time-folding bridge that makes finite-horizon members checkable with
/// stationary policies.
namespace rlgen::wrappers {

/// Invertible packing of (base_state, theta_index) into one flat state id.
struct AugmentedStateIndex {
    int base_state = 0;
    int theta_index = 0;

    int pack(int num_base_states) const { return theta_index * num_base_states + base_state; }
    static AugmentedStateIndex unpack(int flat, int num_base_states) {
        return {flat % num_base_states, flat / num_base_states};
    }
};

/// Product family over (state, theta_index): every output member shares one
/// block-diagonal transition table and one reward table; members differ only
/// in which theta block their start distribution occupies. Theta is indexed
/// by position in the sample, not by raw seed.
family::MdpFamily augment_with_theta(const family::MdpFamily& fam,
                                     const family::EmpiricalSample& sample);

/// A window of the last k observations and (optionally) k-1 actions, padded
/// with `kBlank` before warm-up.
struct HistoryStateIndex {
    std::vector<int> obs;   // length k, oldest first
    std::vector<int> acts;  // length k-1 when actions included, else empty

    static constexpr int kBlank = -1;
    bool operator==(const HistoryStateIndex&) const = default;
    bool operator<(const HistoryStateIndex& o) const {
        return obs != o.obs ? obs < o.obs : acts < o.acts;
    }
};

/// Lifts every member's dynamics to history windows over the union of all
/// members' feasible windows (so spaces stay shared). k=1 with full-state
/// observation reproduces the original MDP restricted to its reachable states.
/// Throws CapExceeded when the union exceeds `cap` windows.
family::MdpFamily history_wrapper(const family::MdpFamily& fam,
                                  const family::EmpiricalSample& sample, int k,
                                  bool include_actions = true, std::size_t cap = 200000,
                                  std::vector<HistoryStateIndex>* index_out = nullptr);

/// Relabels states by the permutation w (state s becomes observation w[s]).
TabularMdp obfuscate_observations(const TabularMdp& mdp, const std::vector<int>& w);

inline int folded_state(int base_state, int t, int num_base_states) {
    return t * num_base_states + base_state;
}
inline int folded_terminal(int num_base_states, int horizon_steps) {
    return num_base_states * horizon_steps;
}

/// Unrolls a finite-horizon MDP into an unbounded one over (state, t) pairs
/// plus an absorbing zero-reward terminal; V* at (s, 0) equals the
/// finite-horizon V*(s). The discount is preserved (gamma = 1 stays legal
/// because the folded chain is episodic).
TabularMdp fold_time(const TabularMdp& mdp);

/// Seeded permutation of [0, n) for view-space obfuscation on arbitrary
/// domains (the hypercube families use env_zoo's keyed_permutation instead).
std::vector<int> view_permutation(std::uint64_t key, int n);

/// Episode simulator whose views are passed through a fixed permutation.
/// The goal channel is left untouched: it is theta metadata, not a state
/// observation.
class ObfuscatedSim : public family::EpisodeSim {
public:
    ObfuscatedSim(std::unique_ptr<family::EpisodeSim> inner, std::vector<int> perm);
    int num_actions() const override { return inner_->num_actions(); }
    int max_steps() const override { return inner_->max_steps(); }
    double discount() const override { return inner_->discount(); }
    family::SimObservation reset(std::uint64_t episode_seed) override;
    family::SimStepResult step(int action) override;

private:
    std::uint64_t map_view(std::uint64_t view) const;
    std::unique_ptr<family::EpisodeSim> inner_;
    std::vector<int> perm_;
};

/// Episode simulator whose view is a 64-bit digest of the last k observations
/// and k-1 actions (blank-padded). Digests are stable across runs; agents key
/// on them opaquely.
class HistorySim : public family::EpisodeSim {
public:
    HistorySim(std::unique_ptr<family::EpisodeSim> inner, int k, bool include_actions = true);
    int num_actions() const override { return inner_->num_actions(); }
    int max_steps() const override { return inner_->max_steps(); }
    double discount() const override { return inner_->discount(); }
    family::SimObservation reset(std::uint64_t episode_seed) override;
    family::SimStepResult step(int action) override;

private:
    std::uint64_t digest() const;
    std::unique_ptr<family::EpisodeSim> inner_;
    int k_;
    bool include_actions_;
    std::deque<std::uint64_t> obs_;
    std::deque<std::uint64_t> acts_;
};

/// Episode simulator that exposes the member's sample position in the view's
/// high bits (the simulation-side face of theta-augmentation). Inner views
/// must stay below 2^40.
class ThetaTaggedSim : public family::EpisodeSim {
public:
    ThetaTaggedSim(std::unique_ptr<family::EpisodeSim> inner, int theta_index);
    int num_actions() const override { return inner_->num_actions(); }
    int max_steps() const override { return inner_->max_steps(); }
    double discount() const override { return inner_->discount(); }
    family::SimObservation reset(std::uint64_t episode_seed) override;
    family::SimStepResult step(int action) override;

private:
    std::uint64_t tag(std::uint64_t view) const;
    std::unique_ptr<family::EpisodeSim> inner_;
    std::uint64_t theta_index_;
};

}  // namespace rlgen::wrappers
