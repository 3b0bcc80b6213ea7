#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rlgen/mdp.hpp"

namespace rlgen::family {

/// One family parameter: a 64-bit seed plus optional structured fields
/// (goal cell, mirror flag, start state, ...) kept for report legibility.
struct Theta {
    std::uint64_t seed = 0;
    std::map<std::string, std::int64_t> fields;

    std::int64_t field(const std::string& name, std::int64_t fallback = 0) const {
        auto it = fields.find(name);
        return it == fields.end() ? fallback : it->second;
    }
    bool operator==(const Theta&) const = default;
    bool operator<(const Theta& o) const {
        return seed != o.seed ? seed < o.seed : fields < o.fields;
    }
};

/// Parameter distribution: an explicit finite list, or a seeded generator.
class ParamSpace {
public:
    static ParamSpace finite(std::vector<Theta> thetas);
    /// `sampler` builds a Theta from a derived member seed; the returned
    /// record's .seed is overwritten with that member seed.
    static ParamSpace generative(std::uint64_t master_seed,
                                 std::function<Theta(std::uint64_t)> sampler);

    bool is_finite() const { return finite_; }
    const std::vector<Theta>& thetas() const { return thetas_; }
    std::uint64_t master_seed() const { return master_seed_; }
    Theta generate(const std::string& stream_label, std::uint64_t split_seed,
                   std::uint64_t index) const;

private:
    ParamSpace() = default;
    bool finite_ = true;
    std::vector<Theta> thetas_;
    std::uint64_t master_seed_ = 0;
    std::function<Theta(std::uint64_t)> sampler_;
};

/// An ordered draw of n parameters, tagged with the seed and label that
/// produced it.
struct EmpiricalSample {
    std::vector<Theta> thetas;
    std::uint64_t master_seed = 0;
    std::string label;

    std::size_t size() const { return thetas.size(); }
};

struct SimObservation {
    std::uint64_t view = 0;  // what the agent keys on
    std::uint64_t goal = 0;  // separate goal channel; 0 when the family exposes none
};

struct SimStepResult {
    std::uint64_t view = 0;
    double reward = 0.0;
    bool done = false;
};

/// Episode-level simulation interface for a single family member. Instances
/// are cheap, single-episode-at-a-time state machines.
class EpisodeSim {
public:
    virtual ~EpisodeSim() = default;
    virtual int num_actions() const = 0;
    virtual int max_steps() const = 0;
    virtual double discount() const = 0;
    virtual SimObservation reset(std::uint64_t episode_seed) = 0;
    virtual SimStepResult step(int action) = 0;
};

/// A theta-indexed MDP family. `build` yields exact tables (null for
/// simulation-only members); `make_sim` yields episode simulators (null for
/// table-only families).
class MdpFamily {
public:
    using BuildFn = std::function<TabularMdp(const Theta&)>;
    using SimFn = std::function<std::unique_ptr<EpisodeSim>(const Theta&)>;

    MdpFamily(ParamSpace params, BuildFn build, bool shared_spaces, SimFn make_sim = nullptr);

    const ParamSpace& params() const { return params_; }
    bool shared_spaces() const { return shared_spaces_; }
    bool tabular() const { return static_cast<bool>(build_); }
    bool simulable() const { return static_cast<bool>(make_sim_); }

    TabularMdp member(const Theta& theta) const;
    std::unique_ptr<EpisodeSim> sim(const Theta& theta) const;

    /// Re-checks the shared-space assertion over the given thetas (used for
    /// Generative mode, where construction cannot enumerate members).
    void check_shared_spaces(const std::vector<Theta>& thetas) const;

private:
    ParamSpace params_;
    BuildFn build_;
    bool shared_spaces_;
    SimFn make_sim_;
};

/// Generic simulator over an exact table: views are state ids, the goal
/// channel is a fixed per-member word, episodes end in absorbing zero-reward
/// states or after `step_cap` steps (finite horizons use their own length).
class TabularEpisodeSim : public EpisodeSim {
public:
    TabularEpisodeSim(TabularMdp mdp, std::uint64_t goal_channel, int step_cap = 500);
    int num_actions() const override { return mdp_.num_actions(); }
    int max_steps() const override { return max_steps_; }
    double discount() const override { return mdp_.discount(); }
    SimObservation reset(std::uint64_t episode_seed) override;
    SimStepResult step(int action) override;

private:
    TabularMdp mdp_;
    std::uint64_t goal_channel_;
    int max_steps_;
    std::vector<char> terminal_;
    int state_ = 0;
    std::mt19937_64 rng_;
};

struct GapReport {
    double j_train = 0.0;
    double j_population = 0.0;
    double gap = 0.0;  // always j_train - j_population
    double stderr_train = 0.0;
    double stderr_population = 0.0;
    int n_train = 0;
    int n_eval = 0;
};

/// Deterministic disjoint train/eval split. Finite mode samples without
/// replacement; Generative mode draws the two lists from disjoint seed streams.
std::pair<EmpiricalSample, EmpiricalSample> sample_split(const ParamSpace& space, int n_train,
                                                         int n_eval, std::uint64_t seed);

/// Mean exact episode reward of the policy across the sample, in list order.
double empirical_reward(const DeterministicPolicy& policy, const EmpiricalSample& sample,
                        const MdpFamily& family);
double empirical_reward(const SoftmaxPolicy& policy, const EmpiricalSample& sample,
                        const MdpFamily& family);

/// Per-member exact episode rewards (the terms of empirical_reward).
std::vector<double> member_rewards(const DeterministicPolicy& policy,
                                   const EmpiricalSample& sample, const MdpFamily& family);
std::vector<double> member_rewards(const SoftmaxPolicy& policy, const EmpiricalSample& sample,
                                   const MdpFamily& family);

GapReport gap_report(const DeterministicPolicy& policy, const EmpiricalSample& train,
                     const EmpiricalSample& eval, const MdpFamily& family);
GapReport gap_report(const SoftmaxPolicy& policy, const EmpiricalSample& train,
                     const EmpiricalSample& eval, const MdpFamily& family);

/// Seed-unwrapping depth.
struct UnwrapDepth {
    enum class Kind { InitialOnly, NoiseStream };
    Kind kind = Kind::InitialOnly;
    int stream_length = 0;  // NoiseStream only; must equal the finite horizon

    static UnwrapDepth initial_only() { return {Kind::InitialOnly, 0}; }
    static UnwrapDepth noise_stream(int t) { return {Kind::NoiseStream, t}; }
};

/// Converts a stochastic MDP into a finite family of deterministic(-start)
/// members, one per seed. InitialOnly keeps dynamics and replaces the start
/// distribution with a seeded Dirac draw; NoiseStream additionally pre-draws
/// per-timestep variates and determinizes transitions by inverse-CDF lookup
/// over a time-folded state space.
MdpFamily unwrap_seeds(const TabularMdp& mdp, const std::vector<std::uint64_t>& seeds,
                       UnwrapDepth depth);

}  // namespace rlgen::family
