#include "rlgen/oracles.hpp"

#include <cmath>
#include <stdexcept>

#include "rlgen/errors.hpp"
#include "rlgen/rng.hpp"

namespace rlgen::oracles {

namespace {

/// Dense per-state action distributions for either policy kind.
std::vector<std::vector<double>> dense_probs(const TabularMdp& mdp,
                                             const DeterministicPolicy& policy) {
    std::vector<std::vector<double>> p(mdp.num_states(), std::vector<double>(mdp.num_actions(), 0.0));
    for (int s = 0; s < mdp.num_states(); ++s) p[s][policy.action[s]] = 1.0;
    return p;
}

std::vector<std::vector<double>> dense_probs(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
    std::vector<std::vector<double>> p(mdp.num_states());
    for (int s = 0; s < mdp.num_states(); ++s) p[s] = policy.probs(s);
    return p;
}

/// Reference evaluator over dense tables. Finite horizon: literal backward
/// induction. Unbounded: Gauss-Jordan on (I - gamma P); for episodic gamma=1
/// chains, a long truncated power series (exact once the chain has absorbed).
double dense_value(const TabularMdp& mdp, const std::vector<std::vector<double>>& probs) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const double g = mdp.discount();
    std::vector<std::vector<double>> p(S, std::vector<double>(S, 0.0));
    std::vector<double> r(S, 0.0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            double pa = probs[s][a];
            if (pa == 0.0) continue;
            r[s] += pa * mdp.reward(s, a);
            for (const auto& t : mdp.transitions(s, a)) p[s][t.next] += pa * t.prob;
        }
    std::vector<double> v(S, 0.0);
    if (mdp.horizon().is_finite()) {
        std::vector<double> next(S, 0.0);
        for (int t = 0; t < mdp.horizon().steps(); ++t) {
            for (int s = 0; s < S; ++s) {
                double acc = r[s];
                for (int j = 0; j < S; ++j) acc += g * p[s][j] * v[j];
                next[s] = acc;
            }
            v = next;
        }
    } else if (g < 1.0) {
        std::vector<std::vector<double>> m(S, std::vector<double>(S + 1, 0.0));
        for (int i = 0; i < S; ++i) {
            for (int j = 0; j < S; ++j) m[i][j] = (i == j ? 1.0 : 0.0) - g * p[i][j];
            m[i][S] = r[i];
        }
        for (int col = 0; col < S; ++col) {
            int pivot = -1;
            double best = 1e-300;
            for (int i = col; i < S; ++i)
                if (std::abs(m[i][col]) > best) {
                    best = std::abs(m[i][col]);
                    pivot = i;
                }
            if (pivot < 0) throw NonConvergent("oracle system singular");
            std::swap(m[pivot], m[col]);
            double d = m[col][col];
            for (int j = 0; j <= S; ++j) m[col][j] /= d;
            for (int i = 0; i < S; ++i) {
                if (i == col) continue;
                double f = m[i][col];
                if (f == 0.0) continue;
                for (int j = 0; j <= S; ++j) m[i][j] -= f * m[col][j];
            }
        }
        for (int s = 0; s < S; ++s) v[s] = m[s][S];
    } else {
        std::vector<double> next(S, 0.0);
        for (int t = 0; t < 4 * S + 16; ++t) {
            for (int s = 0; s < S; ++s) {
                double acc = r[s];
                for (int j = 0; j < S; ++j) acc += p[s][j] * v[j];
                next[s] = acc;
            }
            v = next;
        }
    }
    double out = 0.0;
    const auto& start = mdp.start_dist();
    for (int s = 0; s < S; ++s) out += start[s] * v[s];
    return out;
}

}  // namespace

double policy_value(const TabularMdp& mdp, const DeterministicPolicy& policy) {
    return dense_value(mdp, dense_probs(mdp, policy));
}

double policy_value(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
    return dense_value(mdp, dense_probs(mdp, policy));
}

EnumerationResult enumerate_policies(const TabularMdp& mdp, std::uint64_t cap) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    double total = std::pow(static_cast<double>(A), static_cast<double>(S));
    if (total > static_cast<double>(cap)) throw CapExceeded("policy enumeration cap exceeded");
    EnumerationResult out;
    out.best_value = -std::numeric_limits<double>::infinity();
    out.policies_evaluated = 0;
    DeterministicPolicy pi;
    pi.action.assign(S, 0);
    while (true) {
        double v = policy_value(mdp, pi);
        ++out.policies_evaluated;
        if (v > out.best_value) {
            out.best_value = v;
            out.best_policy = pi;
        }
        int i = S - 1;
        while (i >= 0 && pi.action[i] == A - 1) pi.action[i--] = 0;
        if (i < 0) break;
        ++pi.action[i];
    }
    return out;
}

std::vector<double> fd_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy, double step) {
    SoftmaxPolicy probe = policy;
    std::vector<double> grad(probe.logits.size(), 0.0);
    for (std::size_t i = 0; i < probe.logits.size(); ++i) {
        double keep = probe.logits[i];
        probe.logits[i] = keep + step;
        double hi = policy_value(mdp, probe);
        probe.logits[i] = keep - step;
        double lo = policy_value(mdp, probe);
        probe.logits[i] = keep;
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

McEstimate mc_policy_value(const TabularMdp& mdp, const DeterministicPolicy& policy,
                           std::uint64_t episodes, std::uint64_t seed) {
    if (episodes == 0) throw std::invalid_argument("mc_policy_value needs episodes >= 1");
    const double g = mdp.discount();
    int max_steps;
    if (mdp.horizon().is_finite()) {
        max_steps = mdp.horizon().steps();
    } else if (g == 0.0) {
        max_steps = 1;
    } else if (g < 1.0) {
        double scale = mdp.max_abs_reward() + 1.0;
        max_steps = static_cast<int>(std::ceil(std::log(1e-10 / scale) / std::log(g))) + 1;
    } else {
        max_steps = 8 * mdp.num_states();  // episodic: absorbed long before this
    }
    auto rng = make_rng(seed, "mc-policy-value");
    const auto& start = mdp.start_dist();
    double sum = 0.0;
    double sumsq = 0.0;
    for (std::uint64_t ep = 0; ep < episodes; ++ep) {
        int s = sample_discrete(start.data(), static_cast<int>(start.size()), uniform01(rng));
        double ret = 0.0;
        double gpow = 1.0;
        for (int t = 0; t < max_steps; ++t) {
            int a = policy.action[s];
            ret += gpow * mdp.reward(s, a);
            gpow *= g;
            auto row = mdp.transitions(s, a);
            if (row.size() == 1) {
                s = row[0].next;
            } else {
                double u = uniform01(rng);
                double acc = 0.0;
                int next = row[row.size() - 1].next;
                for (const auto& e : row) {
                    acc += e.prob;
                    if (u < acc) {
                        next = e.next;
                        break;
                    }
                }
                s = next;
            }
            if (gpow == 0.0) break;
        }
        sum += ret;
        sumsq += ret * ret;
    }
    McEstimate out;
    double n = static_cast<double>(episodes);
    out.mean = sum / n;
    double var = episodes > 1 ? std::max(0.0, (sumsq - sum * sum / n) / (n - 1.0)) : 0.0;
    out.stderr_mean = std::sqrt(var / n);
    out.episodes = episodes;
    return out;
}

TabularMdp make_random_mdp(std::uint64_t seed, int num_states, int num_actions, double discount,
                           Horizon horizon, int branching) {
    TabularMdp mdp(num_states, num_actions, discount, horizon);
    branching = std::min(branching, num_states);
    auto rng = make_rng(seed, "random-mdp");
    std::vector<int> targets(num_states);
    for (int s = 0; s < num_states; ++s) {
        for (int a = 0; a < num_actions; ++a) {
            mdp.set_reward(s, a, uniform01(rng));
            for (int i = 0; i < num_states; ++i) targets[i] = i;
            shuffle_vec(targets, rng);
            std::vector<double> w(branching);
            double z = 0.0;
            for (int i = 0; i < branching; ++i) {
                w[i] = uniform01(rng) + 1e-3;
                z += w[i];
            }
            for (int i = 0; i < branching; ++i) mdp.add_transition(s, a, targets[i], w[i] / z);
        }
    }
    double z = 0.0;
    std::vector<double> w(num_states);
    for (int s = 0; s < num_states; ++s) {
        w[s] = uniform01(rng) + 1e-3;
        z += w[s];
    }
    for (int s = 0; s < num_states; ++s) mdp.set_start(s, w[s] / z);
    mdp.validate();
    return mdp;
}

SoftmaxPolicy make_random_logits(std::uint64_t seed, int num_states, int num_actions,
                                 double scale) {
    SoftmaxPolicy p(num_states, num_actions);
    auto rng = make_rng(seed, "random-logits");
    for (double& l : p.logits) l = scale * (2.0 * uniform01(rng) - 1.0);
    return p;
}

}  // namespace rlgen::oracles
