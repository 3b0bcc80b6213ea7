#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rlgen/errors.hpp"

namespace rlgen {

/// Episode length model: either discounted-unbounded or a fixed step count.
class Horizon {
public:
    static Horizon unbounded() { return Horizon(-1); }
    static Horizon finite(int steps) {
        if (steps < 1) throw InvalidMdp("finite horizon must be >= 1");
        return Horizon(steps);
    }
    bool is_finite() const { return steps_ >= 0; }
    int steps() const { return steps_; }
    bool operator==(const Horizon&) const = default;

private:
    explicit Horizon(int steps) : steps_(steps) {}
    int steps_;
};

struct TransitionEntry {
    int next;
    double prob;
    bool operator==(const TransitionEntry&) const = default;
};

/// Finite MDP with sparse transition rows: reward r(s,a), transition rows
/// T(s,a) as (next, prob) lists, start distribution, discount, and horizon.
///
/// gamma = 1 is allowed with a finite horizon, or with an unbounded horizon
/// when the chain is structurally episodic (every non-absorbing state sits in
/// an acyclic part of the support graph and absorbing states pay zero reward).
/// The latter is what time-folding a finite-horizon MDP produces.
class TabularMdp {
public:
    TabularMdp(int num_states, int num_actions, double discount, Horizon horizon);

    // construction
    void set_reward(int s, int a, double r);
    void add_transition(int s, int a, int next, double prob);  // accumulates, keeps rows sorted by next
    void set_start(int s, double prob);
    void set_start_dirac(int s);

    /// Checks all structural invariants; throws InvalidMdp on violation.
    void validate() const;

    // access
    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    double discount() const { return discount_; }
    Horizon horizon() const { return horizon_; }
    double reward(int s, int a) const { return reward_[row(s, a)]; }
    std::span<const TransitionEntry> transitions(int s, int a) const {
        const auto& r = rows_[row(s, a)];
        return {r.data(), r.size()};
    }
    const std::vector<double>& start_dist() const { return start_; }
    double max_abs_reward() const;

    /// Conservative value-scale bound: max |r| times the effective horizon.
    /// Used to derive default optimality slacks.
    double value_scale() const;

    bool operator==(const TabularMdp&) const = default;

private:
    std::size_t row(int s, int a) const {
        return static_cast<std::size_t>(s) * num_actions_ + a;
    }
    bool structurally_episodic() const;

    int num_states_;
    int num_actions_;
    double discount_;
    Horizon horizon_;
    std::vector<double> reward_;                     // (s,a)
    std::vector<std::vector<TransitionEntry>> rows_; // (s,a) -> sparse next-state rows
    std::vector<double> start_;
};

struct DeterministicPolicy {
    std::vector<int> action;  // per state
    bool operator==(const DeterministicPolicy&) const = default;
};

/// Tabular softmax policy: pi(a|s) = exp(logits(s,a)) normalized per state.
struct SoftmaxPolicy {
    int num_states = 0;
    int num_actions = 0;
    std::vector<double> logits;  // (s,a)

    SoftmaxPolicy() = default;
    SoftmaxPolicy(int states, int actions)
        : num_states(states), num_actions(actions),
          logits(static_cast<std::size_t>(states) * actions, 0.0) {}

    double& logit(int s, int a) { return logits[static_cast<std::size_t>(s) * num_actions + a]; }
    double logit(int s, int a) const { return logits[static_cast<std::size_t>(s) * num_actions + a]; }

    /// Row of action probabilities at state s (sums to 1 within 1e-12).
    std::vector<double> probs(int s) const;
};

/// Output of value_iteration: optimal state values, state-action values, and
/// the sup-norm Bellman residual achieved. For gamma < 1 the distance to the
/// true fixed point is bounded by residual * gamma / (1 - gamma).
struct ValueTables {
    std::vector<double> v;  // per state
    std::vector<double> q;  // (s,a)
    double residual = 0.0;
    int num_states = 0;
    int num_actions = 0;

    double q_at(int s, int a) const { return q[static_cast<std::size_t>(s) * num_actions + a]; }
};

/// Solves for optimal values. Unbounded: Bellman sweeps until the residual of
/// the returned tables is <= tol. Finite horizon: exact backward induction over
/// time-indexed values; the returned tables are the time-0 slice (see fold_time
/// for the stationary view of the same computation).
ValueTables value_iteration(const TabularMdp& mdp, double tol = 1e-10);

enum class EvalMethod {
    Iterative,    // fixed-point sweeps to 1e-10
    LinearSolve,  // dense Gaussian elimination; allowed for |S| <= 2000
    Auto,         // LinearSolve for small unbounded problems, Iterative otherwise
};

struct PolicyValue {
    std::vector<double> v;        // V^pi per state (time-0 slice for finite horizon)
    double episode_reward = 0.0;  // dot(start_dist, V^pi)
};

PolicyValue policy_evaluation(const TabularMdp& mdp, const DeterministicPolicy& policy,
                              EvalMethod method = EvalMethod::Iterative);
PolicyValue policy_evaluation(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                              EvalMethod method = EvalMethod::Iterative);

/// Per-state sets { a : Q(s,a) >= max_a' Q(s,a') - tie_tol }, actions ascending.
std::vector<std::vector<int>> optimal_action_sets(const ValueTables& tables, double tie_tol = 1e-9);

/// Greedy policy from value tables, ties broken by lowest action index.
DeterministicPolicy greedy_policy(const ValueTables& tables);

/// Exact gradient of episode reward with respect to softmax logits, via the
/// discounted state-occupancy solve: grad(s,a) = rho(s) * pi(a|s) * (Q(s,a) - V(s)).
/// Throws CapExceeded when |S|*|A| > cap.
std::vector<double> exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                          std::size_t cap = 100000);

/// Per-state flags: 1 where every action self-loops with probability 1.
std::vector<char> absorbing_states(const TabularMdp& mdp);

}  // namespace rlgen
