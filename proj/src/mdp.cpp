#include "rlgen/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

namespace rlgen {

namespace {

constexpr double kRowSumTol = 1e-9;

/// Classifies states whose every action self-loops with probability 1.
std::vector<char> absorbing_mask(const TabularMdp& mdp) {
    std::vector<char> mask(mdp.num_states(), 1);
    for (int s = 0; s < mdp.num_states(); ++s) {
        for (int a = 0; a < mdp.num_actions() && mask[s]; ++a) {
            auto row = mdp.transitions(s, a);
            if (row.size() != 1 || row[0].next != s || std::abs(row[0].prob - 1.0) > kRowSumTol)
                mask[s] = 0;
        }
    }
    return mask;
}

}  // namespace

TabularMdp::TabularMdp(int num_states, int num_actions, double discount, Horizon horizon)
    : num_states_(num_states),
      num_actions_(num_actions),
      discount_(discount),
      horizon_(horizon),
      reward_(static_cast<std::size_t>(num_states) * num_actions, 0.0),
      rows_(static_cast<std::size_t>(num_states) * num_actions),
      start_(num_states, 0.0) {
    if (num_states < 1) throw InvalidMdp("num_states must be positive");
    if (num_actions < 1) throw InvalidMdp("num_actions must be positive");
    if (!(discount >= 0.0 && discount <= 1.0)) throw InvalidMdp("discount must lie in [0,1]");
}

void TabularMdp::set_reward(int s, int a, double r) {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_)
        throw InvalidMdp("set_reward index out of range");
    reward_[row(s, a)] = r;
}

void TabularMdp::add_transition(int s, int a, int next, double prob) {
    if (s < 0 || s >= num_states_ || a < 0 || a >= num_actions_ || next < 0 || next >= num_states_)
        throw InvalidMdp("add_transition index out of range");
    if (prob < 0.0) throw InvalidMdp("transition probability must be nonnegative");
    if (prob == 0.0) return;
    auto& r = rows_[row(s, a)];
    auto it = std::lower_bound(r.begin(), r.end(), next,
                               [](const TransitionEntry& e, int n) { return e.next < n; });
    if (it != r.end() && it->next == next)
        it->prob += prob;
    else
        r.insert(it, TransitionEntry{next, prob});
}

void TabularMdp::set_start(int s, double prob) {
    if (s < 0 || s >= num_states_) throw InvalidMdp("set_start index out of range");
    if (prob < 0.0) throw InvalidMdp("start probability must be nonnegative");
    start_[s] = prob;
}

void TabularMdp::set_start_dirac(int s) {
    if (s < 0 || s >= num_states_) throw InvalidMdp("set_start_dirac index out of range");
    std::fill(start_.begin(), start_.end(), 0.0);
    start_[s] = 1.0;
}

bool TabularMdp::structurally_episodic() const {
    // Absorbing states must pay zero reward; the rest of the support graph
    // (edges into non-absorbing states only) must be acyclic.
    std::vector<char> absorbing = absorbing_mask(*this);
    for (int s = 0; s < num_states_; ++s) {
        if (!absorbing[s]) continue;
        for (int a = 0; a < num_actions_; ++a)
            if (reward_[row(s, a)] != 0.0) return false;
    }
    // Kahn's algorithm over transient states.
    std::vector<int> indegree(num_states_, 0);
    for (int s = 0; s < num_states_; ++s) {
        if (absorbing[s]) continue;
        for (int a = 0; a < num_actions_; ++a)
            for (const auto& e : rows_[row(s, a)])
                if (!absorbing[e.next]) ++indegree[e.next];
    }
    std::vector<int> queue;
    std::vector<char> seen(num_states_, 0);
    for (int s = 0; s < num_states_; ++s)
        if (!absorbing[s] && indegree[s] == 0) queue.push_back(s);
    int removed = 0;
    int transient = 0;
    for (int s = 0; s < num_states_; ++s)
        if (!absorbing[s]) ++transient;
    while (!queue.empty()) {
        int s = queue.back();
        queue.pop_back();
        if (seen[s]) continue;
        seen[s] = 1;
        ++removed;
        for (int a = 0; a < num_actions_; ++a)
            for (const auto& e : rows_[row(s, a)])
                if (!absorbing[e.next] && --indegree[e.next] == 0) queue.push_back(e.next);
    }
    return removed == transient;
}

void TabularMdp::validate() const {
    for (int s = 0; s < num_states_; ++s) {
        for (int a = 0; a < num_actions_; ++a) {
            const auto& r = rows_[row(s, a)];
            double sum = 0.0;
            for (const auto& e : r) {
                if (e.prob < 0.0) throw InvalidMdp("negative transition probability");
                if (e.next < 0 || e.next >= num_states_)
                    throw InvalidMdp("transition target out of range");
                sum += e.prob;
            }
            if (std::abs(sum - 1.0) > kRowSumTol)
                throw InvalidMdp("transition row does not sum to 1");
        }
    }
    double start_sum = std::accumulate(start_.begin(), start_.end(), 0.0);
    for (double p : start_)
        if (p < 0.0) throw InvalidMdp("negative start probability");
    if (std::abs(start_sum - 1.0) > kRowSumTol) throw InvalidMdp("start_dist does not sum to 1");
    if (discount_ == 1.0 && !horizon_.is_finite() && !structurally_episodic())
        throw InvalidMdp("discount 1 requires a finite horizon or an episodic chain");
}

double TabularMdp::max_abs_reward() const {
    double m = 0.0;
    for (double r : reward_) m = std::max(m, std::abs(r));
    return m;
}

double TabularMdp::value_scale() const {
    double r = max_abs_reward();
    if (horizon_.is_finite()) return r * horizon_.steps();
    if (discount_ < 1.0) return r / (1.0 - discount_);
    return r * num_states_;  // episodic gamma=1: path length bounded by |S|
}

std::vector<double> SoftmaxPolicy::probs(int s) const {
    std::vector<double> p(num_actions);
    double mx = logit(s, 0);
    for (int a = 1; a < num_actions; ++a) mx = std::max(mx, logit(s, a));
    double z = 0.0;
    for (int a = 0; a < num_actions; ++a) {
        p[a] = std::exp(logit(s, a) - mx);
        z += p[a];
    }
    for (int a = 0; a < num_actions; ++a) p[a] /= z;
    return p;
}

namespace {

/// One Bellman optimality backup: out(s) = max_a [ r(s,a) + gamma * E v(next) ].
void optimal_backup(const TabularMdp& mdp, const std::vector<double>& v, std::vector<double>& out,
                    std::vector<double>* q) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    for (int s = 0; s < S; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < A; ++a) {
            double x = mdp.reward(s, a);
            double e = 0.0;
            for (const auto& t : mdp.transitions(s, a)) e += t.prob * v[t.next];
            x += mdp.discount() * e;
            if (q) (*q)[static_cast<std::size_t>(s) * A + a] = x;
            best = std::max(best, x);
        }
        out[s] = best;
    }
}

/// One policy backup under per-state action distributions.
void policy_backup(const TabularMdp& mdp, const std::vector<std::vector<double>>& action_probs,
                   const std::vector<double>& v, std::vector<double>& out) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    for (int s = 0; s < S; ++s) {
        double x = 0.0;
        for (int a = 0; a < A; ++a) {
            double pa = action_probs[s][a];
            if (pa == 0.0) continue;
            double e = 0.0;
            for (const auto& t : mdp.transitions(s, a)) e += t.prob * v[t.next];
            x += pa * (mdp.reward(s, a) + mdp.discount() * e);
        }
        out[s] = x;
    }
}

std::vector<std::vector<double>> expand_policy(const TabularMdp& mdp,
                                               const DeterministicPolicy& policy) {
    if (static_cast<int>(policy.action.size()) != mdp.num_states())
        throw DimensionMismatch("policy state count does not match mdp");
    std::vector<std::vector<double>> probs(mdp.num_states(),
                                           std::vector<double>(mdp.num_actions(), 0.0));
    for (int s = 0; s < mdp.num_states(); ++s) {
        int a = policy.action[s];
        if (a < 0 || a >= mdp.num_actions())
            throw DimensionMismatch("policy action out of range");
        probs[s][a] = 1.0;
    }
    return probs;
}

std::vector<std::vector<double>> expand_policy(const TabularMdp& mdp,
                                               const SoftmaxPolicy& policy) {
    if (policy.num_states != mdp.num_states() || policy.num_actions != mdp.num_actions())
        throw DimensionMismatch("softmax policy dimensions do not match mdp");
    std::vector<std::vector<double>> probs(mdp.num_states());
    for (int s = 0; s < mdp.num_states(); ++s) probs[s] = policy.probs(s);
    return probs;
}

int sweep_cap(const TabularMdp& mdp, double tol) {
    if (mdp.discount() >= 1.0) return mdp.num_states() + 2;
    if (mdp.discount() == 0.0) return 4;
    double scale = mdp.value_scale() + 1.0;
    double n = std::log(tol / scale) / std::log(mdp.discount());
    return std::max(64, static_cast<int>(std::ceil(n)) + 8);
}

/// Iterates backup() to a fixed point. For gamma < 1 stops once the sweep
/// delta guarantees sup-norm error <= tol; for episodic gamma = 1 runs |S|+2
/// sweeps (exact on a DAG). Throws NonConvergent if the cap is exhausted.
template <typename Backup>
std::vector<double> iterate_to_fixpoint(const TabularMdp& mdp, double tol, Backup backup) {
    const double g = mdp.discount();
    const double stop = g > 0.0 && g < 1.0 ? tol * (1.0 - g) / g : tol;
    const int cap = sweep_cap(mdp, stop);
    std::vector<double> v(mdp.num_states(), 0.0);
    std::vector<double> next(mdp.num_states(), 0.0);
    for (int it = 0; it < cap; ++it) {
        backup(v, next);
        double delta = 0.0;
        for (int s = 0; s < mdp.num_states(); ++s) delta = std::max(delta, std::abs(next[s] - v[s]));
        v.swap(next);
        if (delta <= stop) return v;
    }
    // Episodic gamma=1 chains hit the exact fixed point within the cap; reaching
    // here means the chain was not actually episodic (or tol is subnormal).
    throw NonConvergent("value sweep did not reach tolerance");
}

PolicyValue evaluate_expanded(const TabularMdp& mdp,
                              const std::vector<std::vector<double>>& probs, EvalMethod method);

}  // namespace

ValueTables value_iteration(const TabularMdp& mdp, double tol) {
    mdp.validate();
    if (tol <= 0.0) throw InvalidMdp("tol must be positive");
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    ValueTables out;
    out.num_states = S;
    out.num_actions = A;
    out.q.assign(static_cast<std::size_t>(S) * A, 0.0);
    if (mdp.horizon().is_finite()) {
        // Exact backward induction; the returned tables are the time-0 slice.
        std::vector<double> v(S, 0.0);
        std::vector<double> next(S, 0.0);
        for (int t = mdp.horizon().steps() - 1; t >= 0; --t) {
            optimal_backup(mdp, v, next, t == 0 ? &out.q : nullptr);
            v.swap(next);
        }
        out.v = std::move(v);
        out.residual = 0.0;
        return out;
    }
    std::vector<double> v = iterate_to_fixpoint(
        mdp, tol, [&](const std::vector<double>& in, std::vector<double>& o) {
            optimal_backup(mdp, in, o, nullptr);
        });
    out.v.assign(S, 0.0);
    optimal_backup(mdp, v, out.v, &out.q);
    double res = 0.0;
    for (int s = 0; s < S; ++s) res = std::max(res, std::abs(out.v[s] - v[s]));
    out.residual = res;
    return out;
}

namespace {

PolicyValue finite_policy_value(const TabularMdp& mdp,
                                const std::vector<std::vector<double>>& probs) {
    std::vector<double> v(mdp.num_states(), 0.0);
    std::vector<double> next(mdp.num_states(), 0.0);
    for (int t = mdp.horizon().steps() - 1; t >= 0; --t) {
        policy_backup(mdp, probs, v, next);
        v.swap(next);
    }
    PolicyValue out;
    out.v = std::move(v);
    const auto& start = mdp.start_dist();
    for (int s = 0; s < mdp.num_states(); ++s) out.episode_reward += start[s] * out.v[s];
    return out;
}

PolicyValue linear_solve_policy_value(const TabularMdp& mdp,
                                      const std::vector<std::vector<double>>& probs) {
    const int S = mdp.num_states();
    if (S > 2000) throw CapExceeded("linear solve limited to 2000 states");
    // Dense (I - gamma P_pi) v = r_pi with partial pivoting.
    std::vector<double> m(static_cast<std::size_t>(S) * (S + 1), 0.0);
    auto at = [&](int i, int j) -> double& { return m[static_cast<std::size_t>(i) * (S + 1) + j]; };
    for (int s = 0; s < S; ++s) {
        at(s, s) = 1.0;
        for (int a = 0; a < mdp.num_actions(); ++a) {
            double pa = probs[s][a];
            if (pa == 0.0) continue;
            at(s, S) += pa * mdp.reward(s, a);
            for (const auto& t : mdp.transitions(s, a))
                at(s, t.next) -= mdp.discount() * pa * t.prob;
        }
    }
    for (int col = 0; col < S; ++col) {
        int pivot = col;
        for (int r = col + 1; r < S; ++r)
            if (std::abs(at(r, col)) > std::abs(at(pivot, col))) pivot = r;
        if (std::abs(at(pivot, col)) < 1e-300) throw NonConvergent("singular policy system");
        if (pivot != col)
            for (int j = col; j <= S; ++j) std::swap(at(pivot, j), at(col, j));
        for (int r = col + 1; r < S; ++r) {
            double f = at(r, col) / at(col, col);
            if (f == 0.0) continue;
            for (int j = col; j <= S; ++j) at(r, j) -= f * at(col, j);
        }
    }
    PolicyValue out;
    out.v.assign(S, 0.0);
    for (int r = S - 1; r >= 0; --r) {
        double x = at(r, S);
        for (int j = r + 1; j < S; ++j) x -= at(r, j) * out.v[j];
        out.v[r] = x / at(r, r);
    }
    const auto& start = mdp.start_dist();
    for (int s = 0; s < S; ++s) out.episode_reward += start[s] * out.v[s];
    return out;
}

PolicyValue evaluate_expanded(const TabularMdp& mdp,
                              const std::vector<std::vector<double>>& probs, EvalMethod method) {
    if (mdp.horizon().is_finite()) return finite_policy_value(mdp, probs);
    if (method == EvalMethod::Auto)
        method = (mdp.num_states() <= 400 && mdp.discount() < 1.0) ? EvalMethod::LinearSolve
                                                                   : EvalMethod::Iterative;
    if (method == EvalMethod::LinearSolve && mdp.discount() < 1.0)
        return linear_solve_policy_value(mdp, probs);
    std::vector<double> v = iterate_to_fixpoint(
        mdp, 1e-10, [&](const std::vector<double>& in, std::vector<double>& o) {
            policy_backup(mdp, probs, in, o);
        });
    PolicyValue out;
    out.v = std::move(v);
    const auto& start = mdp.start_dist();
    for (int s = 0; s < mdp.num_states(); ++s) out.episode_reward += start[s] * out.v[s];
    return out;
}

}  // namespace

PolicyValue policy_evaluation(const TabularMdp& mdp, const DeterministicPolicy& policy,
                              EvalMethod method) {
    mdp.validate();
    return evaluate_expanded(mdp, expand_policy(mdp, policy), method);
}

PolicyValue policy_evaluation(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                              EvalMethod method) {
    mdp.validate();
    return evaluate_expanded(mdp, expand_policy(mdp, policy), method);
}

std::vector<std::vector<int>> optimal_action_sets(const ValueTables& tables, double tie_tol) {
    if (tie_tol <= 0.0) throw InvalidMdp("tie_tol must be positive");
    std::vector<std::vector<int>> sets(tables.num_states);
    for (int s = 0; s < tables.num_states; ++s) {
        double best = tables.q_at(s, 0);
        for (int a = 1; a < tables.num_actions; ++a) best = std::max(best, tables.q_at(s, a));
        for (int a = 0; a < tables.num_actions; ++a)
            if (tables.q_at(s, a) >= best - tie_tol) sets[s].push_back(a);
    }
    return sets;
}

DeterministicPolicy greedy_policy(const ValueTables& tables) {
    DeterministicPolicy p;
    p.action.assign(tables.num_states, 0);
    for (int s = 0; s < tables.num_states; ++s) {
        int best = 0;
        for (int a = 1; a < tables.num_actions; ++a)
            if (tables.q_at(s, a) > tables.q_at(s, best)) best = a;
        p.action[s] = best;
    }
    return p;
}

namespace {

/// Gradient for a finite-horizon MDP: forward state distributions, backward
/// time-indexed policy values, then grad(s,b) = sum_t gamma^t d_t(s) pi(b|s)
/// (Q_t(s,b) - V_t(s)).
std::vector<double> finite_gradient(const TabularMdp& mdp,
                                    const std::vector<std::vector<double>>& probs) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const int H = mdp.horizon().steps();
    const double g = mdp.discount();
    // Backward pass: V_t for t = H..0 (V_H = 0), keeping all slices.
    std::vector<std::vector<double>> v(H + 1, std::vector<double>(S, 0.0));
    for (int t = H - 1; t >= 0; --t) policy_backup(mdp, probs, v[t + 1], v[t]);
    // Forward pass with the gradient accumulated per timestep.
    std::vector<double> grad(static_cast<std::size_t>(S) * A, 0.0);
    std::vector<double> d(S, 0.0);
    const auto& start = mdp.start_dist();
    for (int s = 0; s < S; ++s) d[s] = start[s];
    double gpow = 1.0;
    std::vector<double> dn(S, 0.0);
    for (int t = 0; t < H; ++t) {
        std::fill(dn.begin(), dn.end(), 0.0);
        for (int s = 0; s < S; ++s) {
            if (d[s] == 0.0) continue;
            double vs = v[t][s];
            for (int a = 0; a < A; ++a) {
                double pa = probs[s][a];
                double e = 0.0;
                for (const auto& tr : mdp.transitions(s, a)) {
                    e += tr.prob * v[t + 1][tr.next];
                    if (pa != 0.0) dn[tr.next] += d[s] * pa * tr.prob;
                }
                double q = mdp.reward(s, a) + g * e;
                grad[static_cast<std::size_t>(s) * A + a] += gpow * d[s] * pa * (q - vs);
            }
        }
        d.swap(dn);
        gpow *= g;
    }
    return grad;
}

std::vector<double> unbounded_gradient(const TabularMdp& mdp,
                                       const std::vector<std::vector<double>>& probs) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const double g = mdp.discount();
    PolicyValue pv = evaluate_expanded(mdp, probs, EvalMethod::Iterative);
    std::vector<double> q(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double e = 0.0;
            for (const auto& t : mdp.transitions(s, a)) e += t.prob * pv.v[t.next];
            q[static_cast<std::size_t>(s) * A + a] = mdp.reward(s, a) + g * e;
        }
    // Discounted occupancy rho = sum_t gamma^t d_t. For episodic gamma=1 the
    // occupancy of absorbing states diverges, but their advantage is exactly
    // zero, so they are pinned to zero and the transient part converges.
    std::vector<char> absorbing(S, 0);
    if (g >= 1.0) absorbing = absorbing_mask(mdp);
    const auto& start = mdp.start_dist();
    std::vector<double> rho(S, 0.0);
    std::vector<double> next(S, 0.0);
    const double stop = g > 0.0 && g < 1.0 ? 1e-12 * (1.0 - g) / g : 1e-12;
    const int cap = g < 1.0 ? sweep_cap(mdp, stop) : S + 2;
    bool converged = false;
    for (int it = 0; it < cap && !converged; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (int s = 0; s < S; ++s) next[s] = start[s];
        for (int s = 0; s < S; ++s) {
            if (rho[s] == 0.0 || absorbing[s]) continue;
            for (int a = 0; a < A; ++a) {
                double pa = probs[s][a];
                if (pa == 0.0) continue;
                for (const auto& t : mdp.transitions(s, a)) next[t.next] += g * rho[s] * pa * t.prob;
            }
        }
        for (int s = 0; s < S; ++s)
            if (absorbing[s]) next[s] = 0.0;
        double delta = 0.0;
        for (int s = 0; s < S; ++s) delta = std::max(delta, std::abs(next[s] - rho[s]));
        rho.swap(next);
        converged = delta <= stop;
    }
    if (!converged) throw NonConvergent("occupancy sweep did not reach tolerance");
    std::vector<double> grad(static_cast<std::size_t>(S) * A, 0.0);
    for (int s = 0; s < S; ++s) {
        if (rho[s] == 0.0) continue;
        for (int a = 0; a < A; ++a)
            grad[static_cast<std::size_t>(s) * A + a] =
                rho[s] * probs[s][a] * (q[static_cast<std::size_t>(s) * A + a] - pv.v[s]);
    }
    return grad;
}

}  // namespace

std::vector<char> absorbing_states(const TabularMdp& mdp) { return absorbing_mask(mdp); }

std::vector<double> exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                          std::size_t cap) {
    mdp.validate();
    if (static_cast<std::size_t>(mdp.num_states()) * mdp.num_actions() > cap)
        throw CapExceeded("state-action space exceeds the exact-gradient cap");
    auto probs = expand_policy(mdp, policy);
    if (mdp.horizon().is_finite()) return finite_gradient(mdp, probs);
    return unbounded_gradient(mdp, probs);
}

}  // namespace rlgen
