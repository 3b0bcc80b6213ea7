#include "rlgen/optimality.hpp"

#include <algorithm>
#include <cmath>

#include "rlgen/errors.hpp"

namespace rlgen::optimality {

namespace {

constexpr double kViTol = 1e-12;

struct MemberData {
    TabularMdp mdp;
    std::vector<std::vector<int>> argmax;  // A*_theta(s)
    std::vector<char> start_support;
    std::vector<char> potential_reach;  // reachable from start support under some policy
};

std::vector<char> potential_reachability(const TabularMdp& mdp, const std::vector<char>& start) {
    std::vector<char> reach = start;
    std::vector<int> stack;
    for (int s = 0; s < mdp.num_states(); ++s)
        if (reach[s]) stack.push_back(s);
    while (!stack.empty()) {
        int s = stack.back();
        stack.pop_back();
        for (int a = 0; a < mdp.num_actions(); ++a)
            for (const auto& e : mdp.transitions(s, a))
                if (!reach[e.next]) {
                    reach[e.next] = 1;
                    stack.push_back(e.next);
                }
    }
    return reach;
}

std::vector<MemberData> prepare_members(const family::MdpFamily& fam,
                                        const family::EmpiricalSample& sample, double tie_tol) {
    if (sample.thetas.empty()) throw EmptySample("checker needs a nonempty sample");
    if (!fam.shared_spaces()) throw SpacesNotShared("checker requires the shared-spaces assertion");
    std::vector<MemberData> members;
    members.reserve(sample.thetas.size());
    for (const auto& theta : sample.thetas) {
        MemberData d{fam.member(theta), {}, {}, {}};
        d.mdp.validate();
        if (d.mdp.horizon().is_finite())
            throw InvalidMdp("checker members must be unbounded (time-fold finite horizons first)");
        if (!members.empty() && (d.mdp.num_states() != members.front().mdp.num_states() ||
                                 d.mdp.num_actions() != members.front().mdp.num_actions()))
            throw SpacesNotShared("members disagree on state or action counts");
        ValueTables tables = value_iteration(d.mdp, kViTol);
        d.argmax = optimal_action_sets(tables, tie_tol);
        d.start_support.assign(d.mdp.num_states(), 0);
        const auto& start = d.mdp.start_dist();
        for (int s = 0; s < d.mdp.num_states(); ++s)
            if (start[s] > 0.0) d.start_support[s] = 1;
        d.potential_reach = potential_reachability(d.mdp, d.start_support);
        members.push_back(std::move(d));
    }
    return members;
}

double resolved_or_throw(double slack, const std::vector<MemberData>& members) {
    std::vector<TabularMdp> mdps;
    mdps.reserve(members.size());
    for (const auto& m : members) mdps.push_back(m.mdp);
    return resolve_slack(slack, mdps);
}

std::vector<std::pair<family::Theta, double>> start_values(
    const std::vector<MemberData>& members, const family::EmpiricalSample& sample,
    const DeterministicPolicy& policy) {
    std::vector<std::pair<family::Theta, double>> values;
    values.reserve(members.size());
    for (std::size_t i = 0; i < members.size(); ++i)
        values.emplace_back(sample.thetas[i],
                            policy_evaluation(members[i].mdp, policy, EvalMethod::Auto)
                                .episode_reward);
    return values;
}

bool verify_members(const std::vector<MemberData>& members, const DeterministicPolicy& policy,
                    double slack) {
    for (const auto& m : members) {
        ValueTables tables = value_iteration(m.mdp, kViTol);
        double best = 0.0;
        const auto& start = m.mdp.start_dist();
        for (int s = 0; s < m.mdp.num_states(); ++s) best += start[s] * tables.v[s];
        double got = policy_evaluation(m.mdp, policy, EvalMethod::Auto).episode_reward;
        if (best - got > slack) return false;
    }
    return true;
}

/// BFS over the full support graph from the member's start support; returns a
/// state-id path ending at `target`, or empty if unreachable.
std::vector<int> evidence_path(const MemberData& m, int target) {
    const int S = m.mdp.num_states();
    std::vector<int> parent(S, -2);
    std::vector<int> queue;
    for (int s = 0; s < S; ++s)
        if (m.start_support[s]) {
            parent[s] = -1;
            queue.push_back(s);
        }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        int s = queue[head];
        if (s == target) break;
        for (int a = 0; a < m.mdp.num_actions(); ++a)
            for (const auto& e : m.mdp.transitions(s, a))
                if (parent[e.next] == -2) {
                    parent[e.next] = s;
                    queue.push_back(e.next);
                }
    }
    if (parent[target] == -2) return {};
    std::vector<int> path;
    for (int s = target; s != -1; s = parent[s]) path.push_back(s);
    std::reverse(path.begin(), path.end());
    return path;
}

ConflictWitness build_witness(const std::vector<MemberData>& members,
                              const family::EmpiricalSample& sample, int state) {
    ConflictWitness w;
    w.state = state;
    for (std::size_t i = 0; i < members.size(); ++i) {
        w.per_theta_argmax.emplace_back(sample.thetas[i], members[i].argmax[state]);
        if (members[i].potential_reach[state]) {
            auto path = evidence_path(members[i], state);
            if (!path.empty()) w.reachability_evidence.emplace_back(sample.thetas[i], path);
        }
    }
    return w;
}

/// Backtracking search state. Per-member reachable sets are the closure of the
/// start support under the actions assigned so far; they are copied on entry
/// to each decision level so backtracking restores them exactly.
///
/// The next decision variable is always the lowest-id unassigned state that
/// some member can currently reach. States outside every closure are never
/// branched on: once no reachable state is unassigned, any completion of the
/// policy is feasible (unassigned states stay unreachable under it), so the
/// search succeeds immediately. This keeps conflict proofs near the start
/// support cheap instead of paying for free assignments to faraway states.
class SharedPolicySearch {
public:
    SharedPolicySearch(const std::vector<MemberData>& members, std::uint64_t budget)
        : members_(members),
          num_states_(members.front().mdp.num_states()),
          num_actions_(members.front().mdp.num_actions()),
          budget_(budget) {
        assignment_.assign(num_states_, -1);
        reach_.resize(members_.size());
        for (std::size_t t = 0; t < members_.size(); ++t) reach_[t] = members_[t].start_support;
    }

    /// Returns true with a complete feasible assignment, or false when the
    /// space is exhausted. Sets exhausted_budget() when the budget ran out.
    bool run() {
        budget_exhausted_ = false;
        return dfs();
    }

    bool exhausted_budget() const { return budget_exhausted_; }
    std::uint64_t nodes_expanded() const { return nodes_; }

    DeterministicPolicy policy() const {
        DeterministicPolicy p;
        p.action.assign(num_states_, 0);
        for (int s = 0; s < num_states_; ++s)
            if (assignment_[s] >= 0) p.action[s] = assignment_[s];
        return p;
    }

private:
    /// Grows member t's reachable set with the successors of (s, assignment)
    /// chains, returning false on a constraint violation (a reachable assigned
    /// state whose action is not in that member's optimal set).
    bool expand_reach(std::size_t t, int from) {
        std::vector<int> stack{from};
        while (!stack.empty()) {
            int s = stack.back();
            stack.pop_back();
            int a = assignment_[s];
            if (a < 0) continue;  // frontier: expands when the state is assigned
            const auto& ok = members_[t].argmax[s];
            if (!std::binary_search(ok.begin(), ok.end(), a)) return false;
            for (const auto& e : members_[t].mdp.transitions(s, a))
                if (!reach_[t][e.next]) {
                    reach_[t][e.next] = 1;
                    stack.push_back(e.next);
                }
        }
        return true;
    }

    bool consistent_after(int s) {
        for (std::size_t t = 0; t < members_.size(); ++t) {
            if (!reach_[t][s]) continue;
            if (!expand_reach(t, s)) return false;
        }
        return true;
    }

    /// Lowest-id unassigned state inside some member's current closure, or -1.
    int pick_frontier() const {
        for (int s = 0; s < num_states_; ++s) {
            if (assignment_[s] >= 0) continue;
            for (std::size_t t = 0; t < members_.size(); ++t)
                if (reach_[t][s]) return s;
        }
        return -1;
    }

    bool dfs() {
        int s = pick_frontier();
        if (s < 0) return true;  // every reachable state is consistently assigned
        auto saved = reach_;
        for (int a = 0; a < num_actions_; ++a) {
            if (++nodes_ > budget_) {
                budget_exhausted_ = true;
                assignment_[s] = -1;
                return false;
            }
            assignment_[s] = a;
            if (consistent_after(s) && dfs()) return true;
            reach_ = saved;
            if (budget_exhausted_) {
                assignment_[s] = -1;
                return false;
            }
        }
        assignment_[s] = -1;
        return false;
    }

    const std::vector<MemberData>& members_;
    int num_states_;
    int num_actions_;
    std::uint64_t budget_;
    std::uint64_t nodes_ = 0;
    bool budget_exhausted_ = false;
    std::vector<int> assignment_;
    std::vector<std::vector<char>> reach_;
};

}  // namespace

double resolve_slack(double slack, const std::vector<TabularMdp>& members) {
    if (slack >= 0.0) return slack;
    double scale = 0.0;
    for (const auto& m : members) scale = std::max(scale, m.value_scale());
    return 1e-8 * (1.0 + scale);
}

OptimalityCertificate strong_check(const family::MdpFamily& fam,
                                   const family::EmpiricalSample& sample, double tie_tol) {
    std::vector<MemberData> members = prepare_members(fam, sample, tie_tol);
    OptimalityCertificate cert;
    cert.slack = resolved_or_throw(kDefaultSlack, members);
    const int S = members.front().mdp.num_states();
    DeterministicPolicy policy;
    policy.action.assign(S, 0);
    for (int s = 0; s < S; ++s) {
        std::vector<int> common = members.front().argmax[s];
        for (std::size_t t = 1; t < members.size() && !common.empty(); ++t) {
            std::vector<int> next;
            std::set_intersection(common.begin(), common.end(), members[t].argmax[s].begin(),
                                  members[t].argmax[s].end(), std::back_inserter(next));
            common = std::move(next);
        }
        if (common.empty()) {
            cert.verdict = Verdict::Unknown;  // sufficient condition failed; escalate
            return cert;
        }
        policy.action[s] = common.front();
    }
    if (!verify_members(members, policy, cert.slack)) {
        cert.verdict = Verdict::Unknown;
        return cert;
    }
    cert.verdict = Verdict::SharedOptimal;
    cert.policy = policy;
    cert.per_theta_values = start_values(members, sample, policy);
    return cert;
}

OptimalityCertificate exact_check(const family::MdpFamily& fam,
                                  const family::EmpiricalSample& sample, double tie_tol,
                                  double slack, std::uint64_t budget) {
    std::vector<MemberData> members = prepare_members(fam, sample, tie_tol);
    OptimalityCertificate cert;
    cert.slack = resolved_or_throw(slack, members);
    SharedPolicySearch search(members, budget);
    bool found = search.run();
    cert.budget_spent = search.nodes_expanded();
    if (search.exhausted_budget()) {
        cert.verdict = Verdict::Unknown;
        return cert;
    }
    if (found) {
        DeterministicPolicy policy = search.policy();
        if (!verify_members(members, policy, cert.slack)) {
            // Tolerance pathology: the argmax-feasible policy missed the slack.
            // Conflict would overclaim, so report Unknown.
            cert.verdict = Verdict::Unknown;
            return cert;
        }
        cert.verdict = Verdict::SharedOptimal;
        cert.policy = std::move(policy);
        cert.per_theta_values = start_values(members, sample, cert.policy);
        return cert;
    }
    // Search space exhausted: some state must have an empty global
    // intersection (otherwise the global-argmax policy would have been found).
    const int S = members.front().mdp.num_states();
    int witness = -1;
    int witness_reach = -1;
    for (int s = 0; s < S; ++s) {
        std::vector<int> common = members.front().argmax[s];
        for (std::size_t t = 1; t < members.size() && !common.empty(); ++t) {
            std::vector<int> next;
            std::set_intersection(common.begin(), common.end(), members[t].argmax[s].begin(),
                                  members[t].argmax[s].end(), std::back_inserter(next));
            common = std::move(next);
        }
        if (!common.empty()) continue;
        int reach = 0;
        for (const auto& m : members)
            if (m.potential_reach[s]) ++reach;
        if (reach > witness_reach) {
            witness_reach = reach;
            witness = s;
        }
    }
    if (witness < 0) {
        cert.verdict = Verdict::Unknown;  // defensive; not expected
        return cert;
    }
    cert.verdict = Verdict::Conflict;
    cert.witness = build_witness(members, sample, witness);
    return cert;
}

VerifyResult verify_shared_optimal(const DeterministicPolicy& policy,
                                   const family::MdpFamily& fam,
                                   const family::EmpiricalSample& sample, double slack) {
    VerifyResult out;
    out.ok = true;
    for (const auto& theta : sample.thetas) {
        TabularMdp mdp = fam.member(theta);
        mdp.validate();
        ValueTables tables = value_iteration(mdp, kViTol);
        double best = 0.0;
        const auto& start = mdp.start_dist();
        for (int s = 0; s < mdp.num_states(); ++s) best += start[s] * tables.v[s];
        double got = policy_evaluation(mdp, policy, EvalMethod::Auto).episode_reward;
        double deficit = best - got;
        out.deficits.emplace_back(theta, deficit);
        if (deficit > slack) out.ok = false;
    }
    return out;
}

}  // namespace rlgen::optimality
