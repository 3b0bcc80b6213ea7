#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"

/// Learning and baseline agents exhibiting memorization-vs-generalization
/// separations, plus the gradient-cosine-similarity diagnostic.
namespace rlgen::agents {

/// Frozen policies may decline an episode they have no stored answer for by
/// emitting this sentinel; the evaluation runner then ends the episode with
/// the reward collected so far. This keeps fresh-theta success rates honest:
/// lookup agents score only through genuine key collisions or learned
/// structure, never through accidental wandering.
constexpr int kHaltAction = -1;

/// Per-episode view of a trained agent's greedy/stored behavior. Instances
/// reference the owning agent's tables; keep the agent alive while acting.
class FrozenPolicy {
public:
    virtual ~FrozenPolicy() = default;
    virtual void begin(const family::SimObservation& obs, int num_actions, int max_steps) = 0;
    /// Next action for the current view, or kHaltAction to end the episode.
    virtual int act(std::uint64_t view) = 0;
};

/// Episode-at-a-time trainable agent. Agents construct their own simulators
/// from the family (some need several per episode, e.g. for replay
/// verification).
class EpisodicAgent {
public:
    virtual ~EpisodicAgent() = default;
    virtual std::string kind() const = 0;
    virtual void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                               std::uint64_t episode_seed) = 0;
    virtual std::unique_ptr<FrozenPolicy> freeze() const = 0;
    /// Bank/table snapshot for inspection and golden tests.
    virtual nlohmann::json state_json() const = 0;
};

// ---------------------------------------------------------------------------
// Q-learning

struct QLearningConfig {
    double alpha = 0.25;     // step size, in (0, 1]
    double epsilon = 0.15;   // exploration rate, in [0, 1]
    double optimistic = 0.0; // initial value for fresh rows
};

/// Tabular Q-learning keyed on the raw observation channels (goal word, view);
/// under observation wrappers it therefore learns on whatever the wrapper
/// exposes, which is the point of those experiments.
class QLearningAgent : public EpisodicAgent {
public:
    explicit QLearningAgent(QLearningConfig cfg);
    std::string kind() const override { return "q_learning"; }
    void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                       std::uint64_t episode_seed) override;
    std::unique_ptr<FrozenPolicy> freeze() const override;
    nlohmann::json state_json() const override;

    using Key = std::pair<std::uint64_t, std::uint64_t>;  // (goal, view)
    const std::map<Key, std::vector<double>>& table() const { return q_; }

private:
    std::vector<double>& row(const Key& key, int num_actions);
    QLearningConfig cfg_;
    std::map<Key, std::vector<double>> q_;
};

// ---------------------------------------------------------------------------
// REINFORCE

struct ReinforceConfig {
    double learning_rate = 0.1;
    bool mean_baseline = true;    // subtract the running mean episode return
    double entropy_bonus = 0.0;   // coefficient on the per-visit entropy term
};

/// Episode-total policy gradient on a tabular softmax policy keyed on
/// (goal, view): logits l(key, a), update lr * (G - b) * sum_t grad log pi.
class ReinforceAgent : public EpisodicAgent {
public:
    explicit ReinforceAgent(ReinforceConfig cfg);
    std::string kind() const override { return "reinforce"; }
    void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                       std::uint64_t episode_seed) override;
    std::unique_ptr<FrozenPolicy> freeze() const override;
    nlohmann::json state_json() const override;

    using Key = std::pair<std::uint64_t, std::uint64_t>;  // (goal, view)
    const std::map<Key, std::vector<double>>& logits() const { return logits_; }

    /// Exports the learned logits as a dense softmax policy over state ids,
    /// for families whose sims observe tabular states directly on the given
    /// goal channel. Unvisited states keep zero logits (uniform).
    SoftmaxPolicy tabular_policy(int num_states, int num_actions, std::uint64_t goal = 0) const;

private:
    std::vector<double>& row(const Key& key, int num_actions);
    ReinforceConfig cfg_;
    std::map<Key, std::vector<double>> logits_;
    double mean_return_ = 0.0;
    std::uint64_t episodes_seen_ = 0;
};

// ---------------------------------------------------------------------------
// Memorizer

struct MemorizerConfig {
    int search_budget = 1024;  // random-search episodes per unsolved key
};

/// Overfitting baseline: random-searches each training member for a rewarding
/// action sequence and stores it keyed on (goal, initial view); sequences are
/// re-verified by replay before insertion. Frozen behavior replays the stored
/// sequence or declines unknown keys.
class MemorizerAgent : public EpisodicAgent {
public:
    explicit MemorizerAgent(MemorizerConfig cfg);
    std::string kind() const override { return "memorizer"; }
    void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                       std::uint64_t episode_seed) override;
    std::unique_ptr<FrozenPolicy> freeze() const override;
    nlohmann::json state_json() const override;

    using Key = std::pair<std::uint64_t, std::uint64_t>;  // (goal, initial view)
    const std::map<Key, std::vector<int>>& bank() const { return bank_; }

private:
    MemorizerConfig cfg_;
    std::map<Key, std::vector<int>> bank_;
};

// ---------------------------------------------------------------------------
// Table inverter (hash-observation family)

struct InverterConfig {
    int search_budget = 1024;  // random-search episodes per unknown goal word
};

/// Generalizing strategy for the hash-observation family: reward events pin
/// down pairs (goal word c, observation word w(c)); the stored map is exactly
/// a partial inverse of the observation bijection, and a known goal is then
/// solved in one step by a0 = o0 XOR w(c). Unknown goals are declined.
class TableInverterAgent : public EpisodicAgent {
public:
    explicit TableInverterAgent(InverterConfig cfg);
    std::string kind() const override { return "table_inverter"; }
    void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                       std::uint64_t episode_seed) override;
    std::unique_ptr<FrozenPolicy> freeze() const override;
    nlohmann::json state_json() const override;

    const std::map<std::uint64_t, std::uint64_t>& goal_map() const { return w_of_goal_; }
    std::size_t known_goals() const { return w_of_goal_.size(); }

private:
    InverterConfig cfg_;
    std::map<std::uint64_t, std::uint64_t> w_of_goal_;  // c -> w(c)
};

// ---------------------------------------------------------------------------
// Model learner (pseudorandom-dynamics family)

/// Learned deterministic transition table (view, action) -> next view.
using ModelTable = std::map<std::pair<std::uint64_t, int>, std::uint64_t>;

struct ModelLearnerConfig {};

/// Model-based generalizer: records every observed transition edge, explores
/// untried actions first, and at evaluation time breadth-first-plans to the
/// announced goal over the learned edges (declining when no plan exists).
class ModelLearnerAgent : public EpisodicAgent {
public:
    explicit ModelLearnerAgent(ModelLearnerConfig cfg = {});
    std::string kind() const override { return "model_learner"; }
    void train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                       std::uint64_t episode_seed) override;
    std::unique_ptr<FrozenPolicy> freeze() const override;
    nlohmann::json state_json() const override;

    const ModelTable& model() const { return model_; }
    /// Fraction of the (view, action) grid observed so far.
    double coverage(std::uint64_t num_views, int num_actions) const;

private:
    ModelLearnerConfig cfg_;
    ModelTable model_;
};

// ---------------------------------------------------------------------------
// Training / evaluation / diagnostics

struct CurvePoint {
    int episode = 0;  // episodes completed when the checkpoint was taken
    double reward = 0.0;
    double stderr_reward = 0.0;
};

struct TrainResult {
    std::vector<CurvePoint> curve;  // always ends with the final checkpoint
};

struct TrainOptions {
    int checkpoint_every = 0;        // 0: final checkpoint only
    int eval_episodes_per_theta = 1; // rollouts per member at each checkpoint
};

/// Runs `episodes` training episodes, drawing theta uniformly from
/// train_sample by a seeded stream; checkpoints record the frozen agent's
/// mean reward on train_sample. Deterministic given master_seed.
TrainResult train(EpisodicAgent& agent, const family::MdpFamily& fam,
                  const family::EmpiricalSample& train_sample, int episodes,
                  std::uint64_t master_seed, TrainOptions opts = {});

struct EvalResult {
    double mean = 0.0;
    double stderr_mean = 0.0;
    std::vector<double> per_episode;  // discounted returns, sample order
};

/// Mean discounted episode reward of the frozen agent across the sample.
/// Rollouts are exact for deterministic members; stochastic members get a
/// Monte-Carlo estimate over episodes_per_theta rollouts each.
EvalResult evaluate(const EpisodicAgent& agent, const family::MdpFamily& fam,
                    const family::EmpiricalSample& sample, int episodes_per_theta = 1,
                    std::uint64_t master_seed = 0);

/// Gradient cosine similarity: cosine between the mean exact policy gradients
/// of the softmax policy over the two samples. Throws DegenerateGradient when
/// either mean gradient has norm < 1e-12.
double gcs(const SoftmaxPolicy& policy, const family::MdpFamily& fam,
           const family::EmpiricalSample& train_sample, const family::EmpiricalSample& test_sample);

/// Uniform-random episode search for a rewarding action sequence on one
/// member; the returned sequence has been replay-verified. Empty optional
/// after the budget is exhausted (failure is a value, not an error).
std::optional<std::vector<int>> solve_by_random_search(const family::MdpFamily& fam,
                                                       const family::Theta& theta,
                                                       int budget_episodes, std::uint64_t seed);

/// Breadth-first shortest path over learned edges, length <= horizon, ties
/// broken by lowest action index (the returned sequence is lexicographically
/// least among shortest known-edge paths). goal == s0 yields the empty
/// sequence; empty optional means unreachable over known edges.
std::optional<std::vector<int>> plan_shortest_path(const ModelTable& table, std::uint64_t s0,
                                                   std::uint64_t goal, int horizon);

/// Config-driven agent factory for the bench runner. Unknown kinds or
/// hyperparameter fields throw ConfigError.
std::unique_ptr<EpisodicAgent> make_agent(const std::string& kind, const nlohmann::json& hyper);

}  // namespace rlgen::agents
