#include "rlgen/agents.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "rlgen/errors.hpp"
#include "rlgen/rng.hpp"

namespace rlgen::agents {

namespace {

int argmax_lowest(const std::vector<double>& row) {
    int best = 0;
    for (int a = 1; a < static_cast<int>(row.size()); ++a) {
        if (row[a] > row[best]) best = a;
    }
    return best;
}

std::vector<double> softmax_row(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t a = 0; a < logits.size(); ++a) {
        p[a] = std::exp(logits[a] - mx);
        z += p[a];
    }
    for (double& v : p) v /= z;
    return p;
}

void require_simulable(const family::MdpFamily& fam, const char* who) {
    if (!fam.simulable()) {
        throw IncompatibleAgent(std::string(who) + " needs an episode simulator for the family");
    }
}

/// Runs the frozen policy for one episode; returns the discounted return.
double run_frozen_episode(FrozenPolicy& frozen, family::EpisodeSim& sim,
                          std::uint64_t episode_seed) {
    const family::SimObservation obs = sim.reset(episode_seed);
    frozen.begin(obs, sim.num_actions(), sim.max_steps());
    const double gamma = sim.discount();
    double total = 0.0;
    double weight = 1.0;
    std::uint64_t view = obs.view;
    for (int t = 0; t < sim.max_steps(); ++t) {
        const int a = frozen.act(view);
        if (a == kHaltAction) break;
        const family::SimStepResult res = sim.step(a);
        total += weight * res.reward;
        weight *= gamma;
        view = res.view;
        if (res.done) break;
    }
    return total;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

// ---------------------------------------------------------------------------
// Q-learning

QLearningAgent::QLearningAgent(QLearningConfig cfg) : cfg_(cfg) {
    if (!(cfg_.alpha > 0.0 && cfg_.alpha <= 1.0)) {
        throw std::invalid_argument("q-learning alpha must lie in (0, 1]");
    }
    if (!(cfg_.epsilon >= 0.0 && cfg_.epsilon <= 1.0)) {
        throw std::invalid_argument("q-learning epsilon must lie in [0, 1]");
    }
}

std::vector<double>& QLearningAgent::row(const Key& key, int num_actions) {
    auto it = q_.find(key);
    if (it == q_.end()) {
        it = q_.emplace(key, std::vector<double>(num_actions, cfg_.optimistic)).first;
    }
    return it->second;
}

void QLearningAgent::train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                                   std::uint64_t episode_seed) {
    require_simulable(fam, "q_learning");
    auto sim = fam.sim(theta);
    const int A = sim->num_actions();
    const double gamma = sim->discount();
    auto explore = make_rng(episode_seed, "explore");
    family::SimObservation obs = sim->reset(episode_seed);
    std::uint64_t view = obs.view;
    for (int t = 0; t < sim->max_steps(); ++t) {
        std::vector<double>& qrow = row({obs.goal, view}, A);
        int a;
        if (uniform01(explore) < cfg_.epsilon) {
            a = static_cast<int>(uniform_below(explore, static_cast<std::uint64_t>(A)));
        } else {
            a = argmax_lowest(qrow);
        }
        const family::SimStepResult res = sim->step(a);
        double next_best = 0.0;
        if (!res.done) {
            auto it = q_.find({obs.goal, res.view});
            next_best = it == q_.end() ? cfg_.optimistic : *std::max_element(it->second.begin(), it->second.end());
        }
        const double target = res.reward + gamma * next_best;
        qrow[a] += cfg_.alpha * (target - qrow[a]);
        view = res.view;
        if (res.done) break;
    }
}

namespace {

class QFrozen : public FrozenPolicy {
public:
    explicit QFrozen(const std::map<QLearningAgent::Key, std::vector<double>>* q) : q_(q) {}
    void begin(const family::SimObservation& obs, int /*num_actions*/, int /*max_steps*/) override {
        goal_ = obs.goal;
    }
    int act(std::uint64_t view) override {
        auto it = q_->find({goal_, view});
        if (it == q_->end()) return 0;  // untrained views fall back to action 0
        return argmax_lowest(it->second);
    }

private:
    const std::map<QLearningAgent::Key, std::vector<double>>* q_;
    std::uint64_t goal_ = 0;
};

}  // namespace

std::unique_ptr<FrozenPolicy> QLearningAgent::freeze() const {
    return std::make_unique<QFrozen>(&q_);
}

nlohmann::json QLearningAgent::state_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, values] : q_) {
        rows.push_back({{"goal", key.first}, {"view", key.second}, {"q", values}});
    }
    return {{"kind", kind()},
            {"alpha", cfg_.alpha},
            {"epsilon", cfg_.epsilon},
            {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// REINFORCE

ReinforceAgent::ReinforceAgent(ReinforceConfig cfg) : cfg_(cfg) {
    if (cfg_.entropy_bonus < 0.0) {
        throw std::invalid_argument("entropy bonus must be >= 0");
    }
}

std::vector<double>& ReinforceAgent::row(const Key& key, int num_actions) {
    auto it = logits_.find(key);
    if (it == logits_.end()) {
        it = logits_.emplace(key, std::vector<double>(num_actions, 0.0)).first;
    }
    return it->second;
}

void ReinforceAgent::train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                                   std::uint64_t episode_seed) {
    require_simulable(fam, "reinforce");
    auto sim = fam.sim(theta);
    const int A = sim->num_actions();
    const double gamma = sim->discount();
    auto sampler = make_rng(episode_seed, "policy-sample");
    family::SimObservation obs = sim->reset(episode_seed);
    std::uint64_t view = obs.view;

    // Accumulated per-key gradients of sum_t log pi(a_t | s_t) and of the
    // per-visit entropy term, both under the pre-update logits.
    std::map<Key, std::vector<double>> score_sum;
    std::map<Key, std::vector<double>> entropy_sum;
    double episode_return = 0.0;
    double weight = 1.0;
    for (int t = 0; t < sim->max_steps(); ++t) {
        const Key key{obs.goal, view};
        const std::vector<double>& logits = row(key, A);
        const std::vector<double> p = softmax_row(logits);
        const int a = sample_discrete(p.data(), A, uniform01(sampler));

        std::vector<double>& score = score_sum.try_emplace(key, A, 0.0).first->second;
        for (int b = 0; b < A; ++b) score[b] -= p[b];
        score[a] += 1.0;
        if (cfg_.entropy_bonus > 0.0) {
            double entropy = 0.0;
            for (int b = 0; b < A; ++b) {
                if (p[b] > 0.0) entropy -= p[b] * std::log(p[b]);
            }
            std::vector<double>& ent = entropy_sum.try_emplace(key, A, 0.0).first->second;
            for (int b = 0; b < A; ++b) {
                if (p[b] > 0.0) ent[b] -= p[b] * (std::log(p[b]) + entropy);
            }
        }

        const family::SimStepResult res = sim->step(a);
        episode_return += weight * res.reward;
        weight *= gamma;
        view = res.view;
        if (res.done) break;
    }

    const double baseline = cfg_.mean_baseline ? mean_return_ : 0.0;
    const double advantage = episode_return - baseline;
    for (auto& [key, score] : score_sum) {
        std::vector<double>& logits = row(key, A);
        for (int b = 0; b < A; ++b) {
            logits[b] += cfg_.learning_rate * advantage * score[b];
        }
    }
    if (cfg_.entropy_bonus > 0.0) {
        for (auto& [key, ent] : entropy_sum) {
            std::vector<double>& logits = row(key, A);
            for (int b = 0; b < A; ++b) {
                logits[b] += cfg_.learning_rate * cfg_.entropy_bonus * ent[b];
            }
        }
    }
    ++episodes_seen_;
    mean_return_ += (episode_return - mean_return_) / static_cast<double>(episodes_seen_);
}

namespace {

class GreedyRowFrozen : public FrozenPolicy {
public:
    explicit GreedyRowFrozen(const std::map<ReinforceAgent::Key, std::vector<double>>* rows)
        : rows_(rows) {}
    void begin(const family::SimObservation& obs, int /*num_actions*/, int /*max_steps*/) override {
        goal_ = obs.goal;
    }
    int act(std::uint64_t view) override {
        auto it = rows_->find({goal_, view});
        if (it == rows_->end()) return 0;
        return argmax_lowest(it->second);
    }

private:
    const std::map<ReinforceAgent::Key, std::vector<double>>* rows_;
    std::uint64_t goal_ = 0;
};

}  // namespace

std::unique_ptr<FrozenPolicy> ReinforceAgent::freeze() const {
    return std::make_unique<GreedyRowFrozen>(&logits_);
}

SoftmaxPolicy ReinforceAgent::tabular_policy(int num_states, int num_actions,
                                             std::uint64_t goal) const {
    SoftmaxPolicy policy(num_states, num_actions);
    for (int s = 0; s < num_states; ++s) {
        auto it = logits_.find({goal, static_cast<std::uint64_t>(s)});
        if (it == logits_.end()) continue;
        if (static_cast<int>(it->second.size()) != num_actions) {
            throw DimensionMismatch("stored logit row width differs from requested action count");
        }
        for (int a = 0; a < num_actions; ++a) policy.logit(s, a) = it->second[a];
    }
    return policy;
}

nlohmann::json ReinforceAgent::state_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, values] : logits_) {
        rows.push_back({{"goal", key.first}, {"view", key.second}, {"logits", values}});
    }
    return {{"kind", kind()},
            {"learning_rate", cfg_.learning_rate},
            {"mean_baseline", cfg_.mean_baseline},
            {"entropy_bonus", cfg_.entropy_bonus},
            {"episodes_seen", episodes_seen_},
            {"mean_return", mean_return_},
            {"rows", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Memorizer

MemorizerAgent::MemorizerAgent(MemorizerConfig cfg) : cfg_(cfg) {}

void MemorizerAgent::train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                                   std::uint64_t episode_seed) {
    require_simulable(fam, "memorizer");
    auto sim = fam.sim(theta);
    const family::SimObservation obs = sim->reset(episode_seed);
    const Key key{obs.goal, obs.view};
    if (bank_.count(key) > 0) return;  // already solved
    auto found = solve_by_random_search(fam, theta, cfg_.search_budget,
                                        derive_seed(episode_seed, "memorize-search"));
    if (!found) return;
    // Re-verify by replay on an independent simulator before inserting.
    auto verify = fam.sim(theta);
    verify->reset(derive_seed(episode_seed, "memorize-verify"));
    double total = 0.0;
    for (int a : *found) {
        const family::SimStepResult res = verify->step(a);
        total += res.reward;
        if (res.done) break;
    }
    if (total > 0.0) bank_[key] = *found;
}

namespace {

class ReplayFrozen : public FrozenPolicy {
public:
    explicit ReplayFrozen(const std::map<MemorizerAgent::Key, std::vector<int>>* bank)
        : bank_(bank) {}
    void begin(const family::SimObservation& obs, int /*num_actions*/, int /*max_steps*/) override {
        cursor_ = 0;
        sequence_ = nullptr;
        auto it = bank_->find({obs.goal, obs.view});
        if (it != bank_->end()) sequence_ = &it->second;
    }
    int act(std::uint64_t /*view*/) override {
        if (sequence_ == nullptr || cursor_ >= sequence_->size()) return kHaltAction;
        return (*sequence_)[cursor_++];
    }

private:
    const std::map<MemorizerAgent::Key, std::vector<int>>* bank_;
    const std::vector<int>* sequence_ = nullptr;
    std::size_t cursor_ = 0;
};

}  // namespace

std::unique_ptr<FrozenPolicy> MemorizerAgent::freeze() const {
    return std::make_unique<ReplayFrozen>(&bank_);
}

nlohmann::json MemorizerAgent::state_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, seq] : bank_) {
        rows.push_back({{"goal", key.first}, {"view", key.second}, {"actions", seq}});
    }
    return {{"kind", kind()}, {"search_budget", cfg_.search_budget}, {"bank", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Table inverter

TableInverterAgent::TableInverterAgent(InverterConfig cfg) : cfg_(cfg) {}

void TableInverterAgent::train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                                       std::uint64_t episode_seed) {
    require_simulable(fam, "table_inverter");
    auto sim = fam.sim(theta);
    const family::SimObservation obs = sim->reset(episode_seed);
    const std::uint64_t goal = obs.goal;
    if (w_of_goal_.count(goal) > 0) return;
    auto found = solve_by_random_search(fam, theta, cfg_.search_budget,
                                        derive_seed(episode_seed, "invert-search"));
    if (!found) return;
    // Replay the sequence to read off the observation at the reward event:
    // the reward fires on arrival at the goal word, so that observation is
    // exactly the image of the goal under the observation bijection.
    auto replay = fam.sim(theta);
    replay->reset(derive_seed(episode_seed, "invert-replay"));
    std::uint64_t w_of_c = 0;
    bool seen = false;
    for (int a : *found) {
        const family::SimStepResult res = replay->step(a);
        if (res.reward > 0.0) {
            w_of_c = res.view;
            seen = true;
            break;
        }
        if (res.done) break;
    }
    if (!seen) return;
    // One-step check: from a fresh start, o0 XOR w(c) must reach the goal.
    auto check = fam.sim(theta);
    const family::SimObservation o0 = check->reset(derive_seed(episode_seed, "invert-check"));
    const std::uint64_t a0 = o0.view ^ w_of_c;
    if (a0 >= static_cast<std::uint64_t>(check->num_actions())) return;
    const family::SimStepResult res = check->step(static_cast<int>(a0));
    if (!(res.reward > 0.0)) return;
    auto it = w_of_goal_.find(goal);
    if (it != w_of_goal_.end()) {
        if (it->second != w_of_c) {
            throw std::logic_error("inconsistent observation images recorded for one goal word");
        }
        return;
    }
    w_of_goal_.emplace(goal, w_of_c);
}

namespace {

class InverterFrozen : public FrozenPolicy {
public:
    explicit InverterFrozen(const std::map<std::uint64_t, std::uint64_t>* w_of_goal)
        : w_of_goal_(w_of_goal) {}
    void begin(const family::SimObservation& obs, int num_actions, int /*max_steps*/) override {
        fired_ = false;
        pending_.reset();
        auto it = w_of_goal_->find(obs.goal);
        if (it != w_of_goal_->end()) {
            const std::uint64_t a0 = obs.view ^ it->second;
            if (a0 < static_cast<std::uint64_t>(num_actions)) pending_ = static_cast<int>(a0);
        }
    }
    int act(std::uint64_t /*view*/) override {
        if (fired_ || !pending_) return kHaltAction;
        fired_ = true;
        return *pending_;
    }

private:
    const std::map<std::uint64_t, std::uint64_t>* w_of_goal_;
    std::optional<int> pending_;
    bool fired_ = false;
};

}  // namespace

std::unique_ptr<FrozenPolicy> TableInverterAgent::freeze() const {
    return std::make_unique<InverterFrozen>(&w_of_goal_);
}

nlohmann::json TableInverterAgent::state_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [goal, w] : w_of_goal_) {
        rows.push_back({{"goal", goal}, {"obs", w}});
    }
    return {{"kind", kind()}, {"search_budget", cfg_.search_budget}, {"pairs", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Model learner

ModelLearnerAgent::ModelLearnerAgent(ModelLearnerConfig cfg) : cfg_(cfg) {}

void ModelLearnerAgent::train_episode(const family::MdpFamily& fam, const family::Theta& theta,
                                      std::uint64_t episode_seed) {
    require_simulable(fam, "model_learner");
    auto sim = fam.sim(theta);
    const int A = sim->num_actions();
    auto explore = make_rng(episode_seed, "explore");
    family::SimObservation obs = sim->reset(episode_seed);
    std::uint64_t view = obs.view;
    for (int t = 0; t < sim->max_steps(); ++t) {
        int a = -1;
        for (int b = 0; b < A; ++b) {
            if (model_.count({view, b}) == 0) {
                a = b;  // untried actions first
                break;
            }
        }
        if (a < 0) a = static_cast<int>(uniform_below(explore, static_cast<std::uint64_t>(A)));
        const family::SimStepResult res = sim->step(a);
        model_[{view, a}] = res.view;
        view = res.view;
        if (res.done) break;
    }
}

double ModelLearnerAgent::coverage(std::uint64_t num_views, int num_actions) const {
    const double grid = static_cast<double>(num_views) * static_cast<double>(num_actions);
    return grid == 0.0 ? 0.0 : static_cast<double>(model_.size()) / grid;
}

namespace {

class PlannerFrozen : public FrozenPolicy {
public:
    explicit PlannerFrozen(const ModelTable* model) : model_(model) {
        for (const auto& [key, next] : *model_) reverse_[next].push_back(key);
    }

    void begin(const family::SimObservation& obs, int num_actions, int max_steps) override {
        cursor_ = 0;
        plan_.reset();
        const std::map<std::uint64_t, int>& dist = distances_to(obs.goal);
        if (obs.view != obs.goal) {
            auto it = dist.find(obs.view);
            if (it != dist.end() && it->second <= max_steps) plan_ = walk(obs.view, obs.goal, dist);
            return;
        }
        // Reward fires on arrival, so a start already on the goal word needs a
        // shortest nonempty return cycle over known edges.
        for (int a = 0; a < num_actions; ++a) {
            auto edge = model_->find({obs.view, a});
            if (edge == model_->end()) continue;
            if (edge->second == obs.goal) {
                plan_ = std::vector<int>{a};
                break;
            }
            auto dv = dist.find(edge->second);
            if (dv == dist.end() || dv->second + 1 > max_steps) continue;
            if (!plan_ || static_cast<std::size_t>(dv->second) + 1 < plan_->size()) {
                std::vector<int> candidate{a};
                const std::vector<int> tail = walk(edge->second, obs.goal, dist);
                candidate.insert(candidate.end(), tail.begin(), tail.end());
                plan_ = std::move(candidate);
            }
        }
    }

    int act(std::uint64_t /*view*/) override {
        if (!plan_ || cursor_ >= plan_->size()) return kHaltAction;
        return (*plan_)[cursor_++];
    }

private:
    /// Backward breadth-first distances to `goal`, cached per goal because one
    /// frozen policy is reused across many evaluation episodes.
    const std::map<std::uint64_t, int>& distances_to(std::uint64_t goal) {
        auto cached = dist_cache_.find(goal);
        if (cached != dist_cache_.end()) return cached->second;
        std::map<std::uint64_t, int>& dist = dist_cache_[goal];
        dist[goal] = 0;
        std::deque<std::uint64_t> frontier{goal};
        while (!frontier.empty()) {
            const std::uint64_t v = frontier.front();
            frontier.pop_front();
            auto it = reverse_.find(v);
            if (it == reverse_.end()) continue;
            for (const auto& [u, a] : it->second) {
                (void)a;
                if (dist.count(u) == 0) {
                    dist[u] = dist.at(v) + 1;
                    frontier.push_back(u);
                }
            }
        }
        return dist;
    }

    /// Greedy lowest-action walk along decreasing distances (the same
    /// tie-break rule as plan_shortest_path).
    std::vector<int> walk(std::uint64_t from, std::uint64_t goal,
                          const std::map<std::uint64_t, int>& dist) const {
        std::vector<int> path;
        std::uint64_t u = from;
        while (u != goal) {
            const int du = dist.at(u);
            bool advanced = false;
            for (auto it = model_->lower_bound({u, 0}); it != model_->end() && it->first.first == u;
                 ++it) {
                auto dv = dist.find(it->second);
                if (dv != dist.end() && dv->second == du - 1) {
                    path.push_back(it->first.second);
                    u = it->second;
                    advanced = true;
                    break;
                }
            }
            if (!advanced) throw std::logic_error("inconsistent breadth-first distance table");
        }
        return path;
    }

    const ModelTable* model_;
    std::map<std::uint64_t, std::vector<std::pair<std::uint64_t, int>>> reverse_;
    std::map<std::uint64_t, std::map<std::uint64_t, int>> dist_cache_;
    std::optional<std::vector<int>> plan_;
    std::size_t cursor_ = 0;
};

}  // namespace

std::unique_ptr<FrozenPolicy> ModelLearnerAgent::freeze() const {
    return std::make_unique<PlannerFrozen>(&model_);
}

nlohmann::json ModelLearnerAgent::state_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [key, next] : model_) {
        rows.push_back({{"view", key.first}, {"action", key.second}, {"next", next}});
    }
    return {{"kind", kind()}, {"edges", std::move(rows)}};
}

// ---------------------------------------------------------------------------
// Training / evaluation / diagnostics

TrainResult train(EpisodicAgent& agent, const family::MdpFamily& fam,
                  const family::EmpiricalSample& train_sample, int episodes,
                  std::uint64_t master_seed, TrainOptions opts) {
    require_simulable(fam, agent.kind().c_str());
    if (episodes < 0) throw std::invalid_argument("episode count must be >= 0");
    if (episodes > 0 && train_sample.thetas.empty()) {
        throw EmptySample("training requires a nonempty parameter sample");
    }
    TrainResult result;
    auto checkpoint = [&](int done) {
        const EvalResult eval =
            evaluate(agent, fam, train_sample, opts.eval_episodes_per_theta,
                     derive_seed(master_seed, "curve-eval", static_cast<std::uint64_t>(done)));
        result.curve.push_back({done, eval.mean, eval.stderr_mean});
    };
    auto theta_stream = make_rng(master_seed, "episode-theta");
    for (int i = 0; i < episodes; ++i) {
        const auto idx = static_cast<std::size_t>(
            uniform_below(theta_stream, train_sample.thetas.size()));
        agent.train_episode(fam, train_sample.thetas[idx],
                            derive_seed(master_seed, "train-episode",
                                             static_cast<std::uint64_t>(i)));
        const int done = i + 1;
        if (opts.checkpoint_every > 0 && done % opts.checkpoint_every == 0 && done < episodes) {
            checkpoint(done);
        }
    }
    checkpoint(episodes);
    return result;
}

EvalResult evaluate(const EpisodicAgent& agent, const family::MdpFamily& fam,
                    const family::EmpiricalSample& sample, int episodes_per_theta,
                    std::uint64_t master_seed) {
    require_simulable(fam, agent.kind().c_str());
    if (sample.thetas.empty()) throw EmptySample("evaluation requires a nonempty parameter sample");
    if (episodes_per_theta < 1) throw std::invalid_argument("episodes_per_theta must be >= 1");
    auto frozen = agent.freeze();
    EvalResult result;
    result.per_episode.reserve(sample.thetas.size() * static_cast<std::size_t>(episodes_per_theta));
    std::uint64_t episode_index = 0;
    for (const family::Theta& theta : sample.thetas) {
        for (int e = 0; e < episodes_per_theta; ++e, ++episode_index) {
            auto sim = fam.sim(theta);
            result.per_episode.push_back(run_frozen_episode(
                *frozen, *sim, derive_seed(master_seed, "eval-episode", episode_index)));
        }
    }
    const auto [mean, stderr_mean] = mean_and_stderr(result.per_episode);
    result.mean = mean;
    result.stderr_mean = stderr_mean;
    return result;
}

namespace {

std::vector<double> mean_gradient(const SoftmaxPolicy& policy, const family::MdpFamily& fam,
                                  const family::EmpiricalSample& sample) {
    if (sample.thetas.empty()) throw EmptySample("gcs requires nonempty samples");
    std::vector<double> mean;
    for (const family::Theta& theta : sample.thetas) {
        const TabularMdp member = fam.member(theta);
        const std::vector<double> g = exact_policy_gradient(member, policy);
        if (mean.empty()) {
            mean.assign(g.size(), 0.0);
        } else if (mean.size() != g.size()) {
            throw DimensionMismatch("family members disagree on gradient dimensions");
        }
        for (std::size_t i = 0; i < g.size(); ++i) mean[i] += g[i];
    }
    const double inv = 1.0 / static_cast<double>(sample.thetas.size());
    for (double& v : mean) v *= inv;
    return mean;
}

}  // namespace

double gcs(const SoftmaxPolicy& policy, const family::MdpFamily& fam,
           const family::EmpiricalSample& train_sample,
           const family::EmpiricalSample& test_sample) {
    const std::vector<double> ga = mean_gradient(policy, fam, train_sample);
    const std::vector<double> gb = mean_gradient(policy, fam, test_sample);
    if (ga.size() != gb.size()) {
        throw DimensionMismatch("train and test gradients have different dimensions");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        dot += ga[i] * gb[i];
        na += ga[i] * ga[i];
        nb += gb[i] * gb[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) {
        throw DegenerateGradient("gradient norm below 1e-12; cosine undefined");
    }
    const double cosine = dot / (na * nb);
    return std::clamp(cosine, -1.0, 1.0);
}

std::optional<std::vector<int>> solve_by_random_search(const family::MdpFamily& fam,
                                                       const family::Theta& theta,
                                                       int budget_episodes, std::uint64_t seed) {
    require_simulable(fam, "random search");
    for (int i = 0; i < budget_episodes; ++i) {
        auto sim = fam.sim(theta);
        const std::uint64_t episode_seed =
            derive_seed(seed, "search-episode", static_cast<std::uint64_t>(i));
        auto actions = make_rng(seed, "search-actions", static_cast<std::uint64_t>(i));
        sim->reset(episode_seed);
        const int A = sim->num_actions();
        std::vector<int> sequence;
        double total = 0.0;
        for (int t = 0; t < sim->max_steps(); ++t) {
            const int a = static_cast<int>(uniform_below(actions, static_cast<std::uint64_t>(A)));
            sequence.push_back(a);
            const family::SimStepResult res = sim->step(a);
            total += res.reward;
            if (res.done) break;
        }
        if (total <= 0.0) continue;
        // Replay-verify with the same episode seed before returning.
        auto verify = fam.sim(theta);
        verify->reset(episode_seed);
        double replay_total = 0.0;
        for (int a : sequence) {
            const family::SimStepResult res = verify->step(a);
            replay_total += res.reward;
            if (res.done) break;
        }
        if (replay_total > 0.0) return sequence;
    }
    return std::nullopt;
}

std::optional<std::vector<int>> plan_shortest_path(const ModelTable& table, std::uint64_t s0,
                                                   std::uint64_t goal, int horizon) {
    if (s0 == goal) return std::vector<int>{};
    if (horizon < 1) return std::nullopt;
    // Backward breadth-first distances to the goal over the known edges, then
    // a greedy forward walk taking the lowest action that stays on a shortest
    // path — this yields the lexicographically least shortest sequence.
    std::map<std::uint64_t, std::vector<std::pair<std::uint64_t, int>>> reverse;
    for (const auto& [key, next] : table) reverse[next].push_back(key);
    std::map<std::uint64_t, int> dist;
    dist[goal] = 0;
    std::deque<std::uint64_t> frontier{goal};
    while (!frontier.empty()) {
        const std::uint64_t v = frontier.front();
        frontier.pop_front();
        auto it = reverse.find(v);
        if (it == reverse.end()) continue;
        for (const auto& [u, a] : it->second) {
            (void)a;
            if (dist.count(u) == 0) {
                dist[u] = dist[v] + 1;
                frontier.push_back(u);
            }
        }
    }
    auto at_start = dist.find(s0);
    if (at_start == dist.end() || at_start->second > horizon) return std::nullopt;
    std::vector<int> path;
    std::uint64_t u = s0;
    while (u != goal) {
        const int du = dist.at(u);
        bool advanced = false;
        // Actions appear in ascending order within the map prefix for u.
        for (auto it = table.lower_bound({u, 0}); it != table.end() && it->first.first == u; ++it) {
            auto dv = dist.find(it->second);
            if (dv != dist.end() && dv->second == du - 1) {
                path.push_back(it->first.second);
                u = it->second;
                advanced = true;
                break;
            }
        }
        if (!advanced) throw std::logic_error("inconsistent breadth-first distance table");
    }
    return path;
}

// ---------------------------------------------------------------------------
// Factory

namespace {

void check_keys(const nlohmann::json& hyper, std::initializer_list<const char*> allowed,
                const std::string& kind) {
    if (hyper.is_null()) return;
    if (!hyper.is_object()) throw ConfigError("agent hyperparameters must be a JSON object");
    for (const auto& [key, value] : hyper.items()) {
        (void)value;
        bool ok = false;
        for (const char* name : allowed) ok = ok || key == name;
        if (!ok) throw ConfigError("unknown hyperparameter '" + key + "' for agent '" + kind + "'");
    }
}

template <typename T>
T field_or(const nlohmann::json& hyper, const char* name, T fallback) {
    if (hyper.is_object() && hyper.contains(name)) return hyper.at(name).get<T>();
    return fallback;
}

}  // namespace

std::unique_ptr<EpisodicAgent> make_agent(const std::string& kind, const nlohmann::json& hyper) {
    if (kind == "q_learning") {
        check_keys(hyper, {"alpha", "epsilon", "optimistic"}, kind);
        QLearningConfig cfg;
        cfg.alpha = field_or(hyper, "alpha", cfg.alpha);
        cfg.epsilon = field_or(hyper, "epsilon", cfg.epsilon);
        cfg.optimistic = field_or(hyper, "optimistic", cfg.optimistic);
        return std::make_unique<QLearningAgent>(cfg);
    }
    if (kind == "reinforce") {
        check_keys(hyper, {"learning_rate", "mean_baseline", "entropy_bonus"}, kind);
        ReinforceConfig cfg;
        cfg.learning_rate = field_or(hyper, "learning_rate", cfg.learning_rate);
        cfg.mean_baseline = field_or(hyper, "mean_baseline", cfg.mean_baseline);
        cfg.entropy_bonus = field_or(hyper, "entropy_bonus", cfg.entropy_bonus);
        return std::make_unique<ReinforceAgent>(cfg);
    }
    if (kind == "memorizer") {
        check_keys(hyper, {"search_budget"}, kind);
        MemorizerConfig cfg;
        cfg.search_budget = field_or(hyper, "search_budget", cfg.search_budget);
        return std::make_unique<MemorizerAgent>(cfg);
    }
    if (kind == "table_inverter") {
        check_keys(hyper, {"search_budget"}, kind);
        InverterConfig cfg;
        cfg.search_budget = field_or(hyper, "search_budget", cfg.search_budget);
        return std::make_unique<TableInverterAgent>(cfg);
    }
    if (kind == "model_learner") {
        check_keys(hyper, {}, kind);
        return std::make_unique<ModelLearnerAgent>(ModelLearnerConfig{});
    }
    throw ConfigError("unknown agent kind '" + kind + "'");
}

}  // namespace rlgen::agents
