#include "rlgen/family.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "rlgen/errors.hpp"
#include "rlgen/rng.hpp"

namespace rlgen::family {

ParamSpace ParamSpace::finite(std::vector<Theta> thetas) {
    std::set<Theta> distinct(thetas.begin(), thetas.end());
    if (distinct.size() != thetas.size())
        throw std::invalid_argument("finite parameter space requires distinct theta records");
    ParamSpace s;
    s.finite_ = true;
    s.thetas_ = std::move(thetas);
    return s;
}

ParamSpace ParamSpace::generative(std::uint64_t master_seed,
                                  std::function<Theta(std::uint64_t)> sampler) {
    if (!sampler) throw std::invalid_argument("generative parameter space requires a sampler");
    ParamSpace s;
    s.finite_ = false;
    s.master_seed_ = master_seed;
    s.sampler_ = std::move(sampler);
    return s;
}

Theta ParamSpace::generate(const std::string& stream_label, std::uint64_t split_seed,
                           std::uint64_t index) const {
    if (finite_) throw std::logic_error("generate is only defined for generative spaces");
    std::uint64_t stream = derive_seed(master_seed_, "param-stream", split_seed);
    std::uint64_t member_seed = derive_seed(stream, stream_label, index);
    Theta theta = sampler_(member_seed);
    theta.seed = member_seed;
    return theta;
}

MdpFamily::MdpFamily(ParamSpace params, BuildFn build, bool shared_spaces, SimFn make_sim)
    : params_(std::move(params)),
      build_(std::move(build)),
      shared_spaces_(shared_spaces),
      make_sim_(std::move(make_sim)) {
    if (shared_spaces_ && params_.is_finite() && build_) check_shared_spaces(params_.thetas());
}

TabularMdp MdpFamily::member(const Theta& theta) const {
    if (!build_) throw IncompatiblePolicy("family has no tabular builder");
    return build_(theta);
}

std::unique_ptr<EpisodeSim> MdpFamily::sim(const Theta& theta) const {
    if (!make_sim_) throw IncompatibleAgent("family has no episode simulator");
    return make_sim_(theta);
}

void MdpFamily::check_shared_spaces(const std::vector<Theta>& thetas) const {
    if (!shared_spaces_ || !build_ || thetas.empty()) return;
    TabularMdp first = build_(thetas.front());
    for (std::size_t i = 1; i < thetas.size(); ++i) {
        TabularMdp m = build_(thetas[i]);
        if (m.num_states() != first.num_states() || m.num_actions() != first.num_actions())
            throw SpacesNotShared("family members disagree on state or action counts");
    }
}

TabularEpisodeSim::TabularEpisodeSim(TabularMdp mdp, std::uint64_t goal_channel, int step_cap)
    : mdp_(std::move(mdp)), goal_channel_(goal_channel) {
    mdp_.validate();
    terminal_ = absorbing_states(mdp_);
    for (int s = 0; s < mdp_.num_states(); ++s) {
        if (!terminal_[s]) continue;
        for (int a = 0; a < mdp_.num_actions(); ++a)
            if (mdp_.reward(s, a) != 0.0) terminal_[s] = 0;
    }
    max_steps_ = mdp_.horizon().is_finite() ? mdp_.horizon().steps() : step_cap;
}

SimObservation TabularEpisodeSim::reset(std::uint64_t episode_seed) {
    rng_ = make_rng(episode_seed, "tabular-episode");
    const auto& start = mdp_.start_dist();
    state_ = sample_discrete(start.data(), static_cast<int>(start.size()), uniform01(rng_));
    return {static_cast<std::uint64_t>(state_), goal_channel_};
}

SimStepResult TabularEpisodeSim::step(int action) {
    if (action < 0 || action >= mdp_.num_actions())
        throw std::invalid_argument("action out of range");
    SimStepResult out;
    out.reward = mdp_.reward(state_, action);
    auto row = mdp_.transitions(state_, action);
    if (row.size() == 1) {
        state_ = row[0].next;
    } else {
        double u = uniform01(rng_);
        double acc = 0.0;
        int next = row[row.size() - 1].next;
        for (const auto& e : row) {
            acc += e.prob;
            if (u < acc) {
                next = e.next;
                break;
            }
        }
        state_ = next;
    }
    out.view = static_cast<std::uint64_t>(state_);
    out.done = terminal_[state_] != 0;
    return out;
}

std::pair<EmpiricalSample, EmpiricalSample> sample_split(const ParamSpace& space, int n_train,
                                                         int n_eval, std::uint64_t seed) {
    if (n_train < 0 || n_eval < 0)
        throw std::invalid_argument("sample sizes must be nonnegative");
    EmpiricalSample train;
    EmpiricalSample eval;
    train.master_seed = eval.master_seed = seed;
    train.label = "train";
    eval.label = "eval";
    if (space.is_finite()) {
        const auto& all = space.thetas();
        if (static_cast<std::size_t>(n_train) + n_eval > all.size())
            throw NotEnoughParams("finite space smaller than n_train + n_eval");
        std::vector<std::size_t> order(all.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        auto rng = make_rng(seed, "sample-split");
        shuffle_vec(order, rng);
        for (int i = 0; i < n_train; ++i) train.thetas.push_back(all[order[i]]);
        for (int i = 0; i < n_eval; ++i) eval.thetas.push_back(all[order[n_train + i]]);
    } else {
        for (int i = 0; i < n_train; ++i)
            train.thetas.push_back(space.generate("train", seed, static_cast<std::uint64_t>(i)));
        for (int i = 0; i < n_eval; ++i)
            eval.thetas.push_back(space.generate("eval", seed, static_cast<std::uint64_t>(i)));
    }
    return {std::move(train), std::move(eval)};
}

namespace {

template <typename Policy>
std::vector<double> member_rewards_impl(const Policy& policy, const EmpiricalSample& sample,
                                        const MdpFamily& family) {
    if (sample.thetas.empty()) throw EmptySample("no thetas to evaluate");
    std::vector<double> rewards;
    rewards.reserve(sample.thetas.size());
    for (const Theta& theta : sample.thetas) {
        TabularMdp mdp = family.member(theta);
        try {
            rewards.push_back(policy_evaluation(mdp, policy, EvalMethod::Auto).episode_reward);
        } catch (const DimensionMismatch& e) {
            throw IncompatiblePolicy(e.what());
        }
    }
    return rewards;
}

double mean_of(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double stderr_of(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / (static_cast<double>(xs.size()) - 1.0) / static_cast<double>(xs.size()));
}

template <typename Policy>
GapReport gap_report_impl(const Policy& policy, const EmpiricalSample& train,
                          const EmpiricalSample& eval, const MdpFamily& family) {
    if (eval.thetas.empty()) throw EmptyEval("gap_report needs a nonempty eval sample");
    GapReport report;
    std::vector<double> tr = member_rewards_impl(policy, train, family);
    std::vector<double> ev = member_rewards_impl(policy, eval, family);
    report.j_train = mean_of(tr);
    report.j_population = mean_of(ev);
    report.gap = report.j_train - report.j_population;
    report.stderr_train = stderr_of(tr, report.j_train);
    report.stderr_population = stderr_of(ev, report.j_population);
    report.n_train = static_cast<int>(tr.size());
    report.n_eval = static_cast<int>(ev.size());
    return report;
}

}  // namespace

std::vector<double> member_rewards(const DeterministicPolicy& policy,
                                   const EmpiricalSample& sample, const MdpFamily& family) {
    return member_rewards_impl(policy, sample, family);
}

std::vector<double> member_rewards(const SoftmaxPolicy& policy, const EmpiricalSample& sample,
                                   const MdpFamily& family) {
    return member_rewards_impl(policy, sample, family);
}

double empirical_reward(const DeterministicPolicy& policy, const EmpiricalSample& sample,
                        const MdpFamily& family) {
    return mean_of(member_rewards_impl(policy, sample, family));
}

double empirical_reward(const SoftmaxPolicy& policy, const EmpiricalSample& sample,
                        const MdpFamily& family) {
    return mean_of(member_rewards_impl(policy, sample, family));
}

GapReport gap_report(const DeterministicPolicy& policy, const EmpiricalSample& train,
                     const EmpiricalSample& eval, const MdpFamily& family) {
    return gap_report_impl(policy, train, eval, family);
}

GapReport gap_report(const SoftmaxPolicy& policy, const EmpiricalSample& train,
                     const EmpiricalSample& eval, const MdpFamily& family) {
    return gap_report_impl(policy, train, eval, family);
}

namespace {

int draw_start_state(const TabularMdp& mdp, std::uint64_t seed) {
    auto rng = make_rng(seed, "unwrap-start");
    const auto& start = mdp.start_dist();
    return sample_discrete(start.data(), static_cast<int>(start.size()), uniform01(rng));
}

TabularMdp noise_stream_member(const TabularMdp& mdp, std::uint64_t seed, int stream_length) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const int T = stream_length;
    const int terminal = S * T;
    auto rng = make_rng(seed, "unwrap-noise");
    std::vector<double> xi(T);
    for (int t = 0; t < T; ++t) xi[t] = uniform01(rng);
    TabularMdp out(S * T + 1, A, mdp.discount(), Horizon::unbounded());
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            int flat = t * S + s;
            for (int a = 0; a < A; ++a) {
                out.set_reward(flat, a, mdp.reward(s, a));
                auto row = mdp.transitions(s, a);
                std::vector<double> probs(S, 0.0);
                for (const auto& e : row) probs[e.next] = e.prob;
                int next = sample_discrete(probs.data(), S, xi[t]);
                out.add_transition(flat, a, t + 1 < T ? (t + 1) * S + next : terminal, 1.0);
            }
        }
    }
    for (int a = 0; a < A; ++a) out.add_transition(terminal, a, terminal, 1.0);
    out.set_start_dirac(draw_start_state(mdp, seed));
    out.validate();
    return out;
}

}  // namespace

MdpFamily unwrap_seeds(const TabularMdp& mdp, const std::vector<std::uint64_t>& seeds,
                       UnwrapDepth depth) {
    mdp.validate();
    if (seeds.empty()) throw EmptySample("unwrap_seeds needs at least one seed");
    if (depth.kind == UnwrapDepth::Kind::NoiseStream) {
        if (!mdp.horizon().is_finite())
            throw UnboundedHorizonNoiseStream("source horizon is unbounded");
        if (depth.stream_length != mdp.horizon().steps())
            throw std::invalid_argument("noise stream length must equal the finite horizon");
    }
    auto members = std::make_shared<std::map<std::uint64_t, TabularMdp>>();
    std::vector<Theta> thetas;
    thetas.reserve(seeds.size());
    for (std::uint64_t seed : seeds) {
        Theta theta;
        theta.seed = seed;
        if (depth.kind == UnwrapDepth::Kind::InitialOnly) {
            TabularMdp member = mdp;
            int s0 = draw_start_state(mdp, seed);
            member.set_start_dirac(s0);
            theta.fields["start"] = s0;
            members->emplace(seed, std::move(member));
        } else {
            TabularMdp member = noise_stream_member(mdp, seed, depth.stream_length);
            theta.fields["start"] = draw_start_state(mdp, seed);
            members->emplace(seed, std::move(member));
        }
        thetas.push_back(std::move(theta));
    }
    auto build = [members](const Theta& theta) -> TabularMdp {
        auto it = members->find(theta.seed);
        if (it == members->end()) throw std::invalid_argument("unknown theta seed");
        return it->second;
    };
    return MdpFamily(ParamSpace::finite(std::move(thetas)), build, /*shared_spaces=*/true);
}

}  // namespace rlgen::family
