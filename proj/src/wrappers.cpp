#include "rlgen/wrappers.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "rlgen/errors.hpp"
#include "rlgen/rng.hpp"

namespace rlgen::wrappers {

namespace {

std::vector<TabularMdp> build_members(const family::MdpFamily& fam,
                                      const family::EmpiricalSample& sample) {
    if (sample.thetas.empty()) throw EmptySample("wrapper needs a nonempty sample");
    if (!fam.shared_spaces()) throw SpacesNotShared("wrapper requires the shared-spaces assertion");
    std::vector<TabularMdp> members;
    members.reserve(sample.thetas.size());
    for (const auto& theta : sample.thetas) {
        TabularMdp m = fam.member(theta);
        m.validate();
        if (!members.empty()) {
            const auto& f = members.front();
            if (m.num_states() != f.num_states() || m.num_actions() != f.num_actions())
                throw SpacesNotShared("members disagree on state or action counts");
            if (m.discount() != f.discount() || !(m.horizon() == f.horizon()))
                throw SpacesNotShared("members disagree on discount or horizon");
        }
        members.push_back(std::move(m));
    }
    return members;
}

}  // namespace

family::MdpFamily augment_with_theta(const family::MdpFamily& fam,
                                     const family::EmpiricalSample& sample) {
    std::vector<TabularMdp> members = build_members(fam, sample);
    const int S = members.front().num_states();
    const int A = members.front().num_actions();
    const int n = static_cast<int>(members.size());
    // One shared table pair: block i carries member i's dynamics and rewards.
    auto skeleton = std::make_shared<TabularMdp>(S * n, A, members.front().discount(),
                                                 members.front().horizon());
    for (int i = 0; i < n; ++i)
        for (int s = 0; s < S; ++s) {
            int flat = AugmentedStateIndex{s, i}.pack(S);
            for (int a = 0; a < A; ++a) {
                skeleton->set_reward(flat, a, members[i].reward(s, a));
                for (const auto& e : members[i].transitions(s, a))
                    skeleton->add_transition(flat, a, AugmentedStateIndex{e.next, i}.pack(S),
                                             e.prob);
            }
        }
    auto starts = std::make_shared<std::map<family::Theta, std::vector<double>>>();
    for (int i = 0; i < n; ++i) {
        std::vector<double> start(static_cast<std::size_t>(S) * n, 0.0);
        const auto& base = members[i].start_dist();
        for (int s = 0; s < S; ++s) start[AugmentedStateIndex{s, i}.pack(S)] = base[s];
        starts->emplace(sample.thetas[i], std::move(start));
    }
    auto build = [skeleton, starts](const family::Theta& theta) -> TabularMdp {
        auto it = starts->find(theta);
        if (it == starts->end()) throw std::invalid_argument("theta not in the augmented sample");
        TabularMdp out = *skeleton;
        for (std::size_t s = 0; s < it->second.size(); ++s)
            out.set_start(static_cast<int>(s), it->second[s]);
        return out;
    };
    return family::MdpFamily(family::ParamSpace::finite(sample.thetas), build,
                             /*shared_spaces=*/true);
}

namespace {

HistoryStateIndex initial_window(int s0, int k, bool include_actions) {
    HistoryStateIndex w;
    w.obs.assign(k, HistoryStateIndex::kBlank);
    w.obs[k - 1] = s0;
    if (include_actions && k > 1) w.acts.assign(k - 1, HistoryStateIndex::kBlank);
    return w;
}

HistoryStateIndex push_window(const HistoryStateIndex& w, int next_obs, int action,
                              bool include_actions) {
    HistoryStateIndex out = w;
    out.obs.erase(out.obs.begin());
    out.obs.push_back(next_obs);
    if (include_actions && !out.acts.empty()) {
        out.acts.erase(out.acts.begin());
        out.acts.push_back(action);
    }
    return out;
}

}  // namespace

family::MdpFamily history_wrapper(const family::MdpFamily& fam,
                                  const family::EmpiricalSample& sample, int k,
                                  bool include_actions, std::size_t cap,
                                  std::vector<HistoryStateIndex>* index_out) {
    if (k < 1) throw std::invalid_argument("history window length must be >= 1");
    std::vector<TabularMdp> members = build_members(fam, sample);
    const int A = members.front().num_actions();
    // Enumerate the union of feasible windows across members. For finite
    // horizons only windows reachable within H steps count as feasible.
    std::set<HistoryStateIndex> feasible;
    for (const auto& m : members) {
        const int max_depth =
            m.horizon().is_finite() ? m.horizon().steps() : std::numeric_limits<int>::max();
        std::set<HistoryStateIndex> visited;
        std::vector<std::pair<HistoryStateIndex, int>> queue;
        const auto& start = m.start_dist();
        for (int s = 0; s < m.num_states(); ++s) {
            if (start[s] <= 0.0) continue;
            auto w = initial_window(s, k, include_actions);
            if (visited.insert(w).second) queue.emplace_back(std::move(w), 0);
        }
        for (std::size_t head = 0; head < queue.size(); ++head) {
            auto [w, depth] = queue[head];  // FIFO order: depth is minimal
            if (depth >= max_depth) continue;
            int obs = w.obs.back();
            for (int a = 0; a < A; ++a)
                for (const auto& e : m.transitions(obs, a)) {
                    auto next = push_window(w, e.next, a, include_actions);
                    if (visited.insert(next).second) {
                        if (visited.size() + feasible.size() > 2 * cap)
                            throw CapExceeded("history window count exceeds the cap");
                        queue.emplace_back(std::move(next), depth + 1);
                    }
                }
        }
        feasible.insert(visited.begin(), visited.end());
        if (feasible.size() > cap) throw CapExceeded("history window count exceeds the cap");
    }
    std::vector<HistoryStateIndex> windows(feasible.begin(), feasible.end());
    auto window_id = std::make_shared<std::map<HistoryStateIndex, int>>();
    for (std::size_t i = 0; i < windows.size(); ++i) window_id->emplace(windows[i], i);
    if (index_out) *index_out = windows;
    const int W = static_cast<int>(windows.size());
    auto shared_windows = std::make_shared<std::vector<HistoryStateIndex>>(std::move(windows));
    auto member_table = std::make_shared<std::map<family::Theta, TabularMdp>>();
    for (std::size_t i = 0; i < members.size(); ++i) {
        const auto& m = members[i];
        TabularMdp lifted(W, A, m.discount(), m.horizon());
        for (int w = 0; w < W; ++w) {
            int obs = (*shared_windows)[w].obs.back();
            for (int a = 0; a < A; ++a) {
                lifted.set_reward(w, a, m.reward(obs, a));
                for (const auto& e : m.transitions(obs, a)) {
                    auto next = push_window((*shared_windows)[w], e.next, a, include_actions);
                    auto it = window_id->find(next);
                    // Successor windows of union windows are feasible for some
                    // member whenever the source was; if this member never
                    // reaches `w`, route unseen successors back to `w` to keep
                    // rows stochastic (the state is unreachable for it anyway).
                    lifted.add_transition(w, a, it == window_id->end() ? w : it->second, e.prob);
                }
            }
        }
        const auto& start = m.start_dist();
        for (int s = 0; s < m.num_states(); ++s) {
            if (start[s] <= 0.0) continue;
            lifted.set_start(window_id->at(initial_window(s, k, include_actions)), start[s]);
        }
        lifted.validate();
        member_table->emplace(sample.thetas[i], std::move(lifted));
    }
    auto build = [member_table](const family::Theta& theta) -> TabularMdp {
        auto it = member_table->find(theta);
        if (it == member_table->end())
            throw std::invalid_argument("theta not in the history-wrapped sample");
        return it->second;
    };
    return family::MdpFamily(family::ParamSpace::finite(sample.thetas), build,
                             /*shared_spaces=*/true);
}

TabularMdp obfuscate_observations(const TabularMdp& mdp, const std::vector<int>& w) {
    mdp.validate();
    const int S = mdp.num_states();
    if (static_cast<int>(w.size()) != S) throw NotABijection("permutation size mismatch");
    std::vector<char> seen(S, 0);
    for (int x : w) {
        if (x < 0 || x >= S || seen[x]) throw NotABijection("not a permutation of the state set");
        seen[x] = 1;
    }
    TabularMdp out(S, mdp.num_actions(), mdp.discount(), mdp.horizon());
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < mdp.num_actions(); ++a) {
            out.set_reward(w[s], a, mdp.reward(s, a));
            for (const auto& e : mdp.transitions(s, a)) out.add_transition(w[s], a, w[e.next], e.prob);
        }
    const auto& start = mdp.start_dist();
    for (int s = 0; s < S; ++s) out.set_start(w[s], start[s]);
    return out;
}

TabularMdp fold_time(const TabularMdp& mdp) {
    mdp.validate();
    if (!mdp.horizon().is_finite()) throw InvalidMdp("fold_time requires a finite horizon");
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const int H = mdp.horizon().steps();
    const int terminal = folded_terminal(S, H);
    TabularMdp out(S * H + 1, A, mdp.discount(), Horizon::unbounded());
    for (int t = 0; t < H; ++t)
        for (int s = 0; s < S; ++s) {
            int flat = folded_state(s, t, S);
            for (int a = 0; a < A; ++a) {
                out.set_reward(flat, a, mdp.reward(s, a));
                for (const auto& e : mdp.transitions(s, a))
                    out.add_transition(flat, a,
                                       t + 1 < H ? folded_state(e.next, t + 1, S) : terminal,
                                       e.prob);
            }
        }
    for (int a = 0; a < A; ++a) out.add_transition(terminal, a, terminal, 1.0);
    const auto& start = mdp.start_dist();
    for (int s = 0; s < S; ++s) out.set_start(folded_state(s, 0, S), start[s]);
    out.validate();
    return out;
}

std::vector<int> view_permutation(std::uint64_t key, int n) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    auto rng = make_rng(key, "view-permutation");
    shuffle_vec(perm, rng);
    return perm;
}

ObfuscatedSim::ObfuscatedSim(std::unique_ptr<family::EpisodeSim> inner, std::vector<int> perm)
    : inner_(std::move(inner)), perm_(std::move(perm)) {
    std::vector<char> seen(perm_.size(), 0);
    for (int x : perm_) {
        if (x < 0 || static_cast<std::size_t>(x) >= perm_.size() || seen[x])
            throw NotABijection("view permutation invalid");
        seen[x] = 1;
    }
}

std::uint64_t ObfuscatedSim::map_view(std::uint64_t view) const {
    if (view >= perm_.size()) throw NotABijection("view outside the permutation domain");
    return static_cast<std::uint64_t>(perm_[view]);
}

family::SimObservation ObfuscatedSim::reset(std::uint64_t episode_seed) {
    auto obs = inner_->reset(episode_seed);
    obs.view = map_view(obs.view);
    return obs;
}

family::SimStepResult ObfuscatedSim::step(int action) {
    auto out = inner_->step(action);
    out.view = map_view(out.view);
    return out;
}

HistorySim::HistorySim(std::unique_ptr<family::EpisodeSim> inner, int k, bool include_actions)
    : inner_(std::move(inner)), k_(k), include_actions_(include_actions) {
    if (k < 1) throw std::invalid_argument("history window length must be >= 1");
}

std::uint64_t HistorySim::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) {
        h ^= x;
        h *= 0x100000001b3ULL;
        h ^= h >> 29;
    };
    for (std::uint64_t o : obs_) mix(o);
    if (include_actions_)
        for (std::uint64_t a : acts_) mix(a ^ 0x51ed270b7a649c3dULL);
    return h;
}

family::SimObservation HistorySim::reset(std::uint64_t episode_seed) {
    auto obs = inner_->reset(episode_seed);
    const std::uint64_t blank = ~0ULL;
    obs_.assign(static_cast<std::size_t>(k_), blank);
    obs_.back() = obs.view;
    acts_.assign(static_cast<std::size_t>(k_ > 0 ? k_ - 1 : 0), blank);
    obs.view = digest();
    return obs;
}

family::SimStepResult HistorySim::step(int action) {
    auto out = inner_->step(action);
    obs_.pop_front();
    obs_.push_back(out.view);
    if (!acts_.empty()) {
        acts_.pop_front();
        acts_.push_back(static_cast<std::uint64_t>(action));
    }
    out.view = digest();
    return out;
}

ThetaTaggedSim::ThetaTaggedSim(std::unique_ptr<family::EpisodeSim> inner, int theta_index)
    : inner_(std::move(inner)), theta_index_(static_cast<std::uint64_t>(theta_index)) {
    if (theta_index < 0) throw std::invalid_argument("theta index must be nonnegative");
}

std::uint64_t ThetaTaggedSim::tag(std::uint64_t view) const {
    if (view >= (1ULL << 40)) throw std::invalid_argument("inner view exceeds 2^40");
    return (theta_index_ << 40) | view;
}

family::SimObservation ThetaTaggedSim::reset(std::uint64_t episode_seed) {
    auto obs = inner_->reset(episode_seed);
    obs.view = tag(obs.view);
    return obs;
}

family::SimStepResult ThetaTaggedSim::step(int action) {
    auto out = inner_->step(action);
    out.view = tag(out.view);
    return out;
}

}  // namespace rlgen::wrappers
