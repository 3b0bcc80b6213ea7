#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "rlgen/family.hpp"
#include "rlgen/mdp.hpp"

/// Decides whether one deterministic stationary policy is optimal for every
/// member of a family (a shared optimal policy). Members must be unbounded
/// MDPs: finite-horizon members should be time-folded first (wrappers) so
/// stationary policies suffice.
namespace rlgen::optimality {

/// Evidence that no shared optimal policy exists: a state whose per-member
/// optimal-action sets have empty intersection, with positive-probability
/// paths from start states to it.
struct ConflictWitness {
    int state = 0;
    /// theta -> optimal-action set at `state` (sample order).
    std::vector<std::pair<family::Theta, std::vector<int>>> per_theta_argmax;
    /// theta -> a support-graph path (state ids, start first) to `state`;
    /// listed only for thetas under which the state is start-reachable.
    std::vector<std::pair<family::Theta, std::vector<int>>> reachability_evidence;
};

enum class Verdict { SharedOptimal, Conflict, Unknown };

struct OptimalityCertificate {
    Verdict verdict = Verdict::Unknown;
    DeterministicPolicy policy;  // populated for SharedOptimal
    std::vector<std::pair<family::Theta, double>> per_theta_values;  // SharedOptimal start values
    std::optional<ConflictWitness> witness;                          // populated for Conflict
    std::uint64_t budget_spent = 0;
    double slack = 0.0;  // the epsilon the certificate was checked against
};

/// Sentinel slack: resolve to 1e-8 * (1 + max member value scale).
inline constexpr double kDefaultSlack = -1.0;
/// Sentinel slack: accept any deficit.
inline constexpr double kAnySlack = std::numeric_limits<double>::infinity();

double resolve_slack(double slack, const std::vector<TabularMdp>& members);

/// Sufficient condition: if the per-state intersection of every member's
/// optimal-action sets is nonempty everywhere, a shared optimal policy exists
/// (lowest action index selected). Empty intersection anywhere -> Unknown,
/// because states outside every reachable region cannot break optimality.
OptimalityCertificate strong_check(const family::MdpFamily& fam,
                                   const family::EmpiricalSample& sample, double tie_tol = 1e-9);

/// Sound and complete decision at small scale: backtracking over deterministic
/// stationary policies. A policy is optimal for a member iff at every state
/// reachable under it (positive probability) from that member's start support
/// it picks an action in the member's optimal-action set; reachable sets only
/// grow along the search, so partial-assignment violations prune soundly.
OptimalityCertificate exact_check(const family::MdpFamily& fam,
                                  const family::EmpiricalSample& sample, double tie_tol = 1e-9,
                                  double slack = kDefaultSlack, std::uint64_t budget = 1000000);

struct VerifyResult {
    bool ok = false;
    std::vector<std::pair<family::Theta, double>> deficits;  // V*_theta(start) - R_theta(policy)
};

/// True iff the policy's start value is within `slack` of V* for every member.
VerifyResult verify_shared_optimal(const DeterministicPolicy& policy,
                                   const family::MdpFamily& fam,
                                   const family::EmpiricalSample& sample, double slack);

}  // namespace rlgen::optimality
