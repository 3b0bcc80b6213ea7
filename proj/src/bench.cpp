#include "rlgen/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "rlgen/agents.hpp"
#include "rlgen/env_zoo.hpp"
#include "rlgen/errors.hpp"
#include "rlgen/optimality.hpp"
#include "rlgen/oracles.hpp"
#include "rlgen/rng.hpp"
#include "rlgen/wrappers.hpp"

namespace rlgen::bench {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Strict JSON helpers

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void require_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) fail(ctx + " must be a JSON object");
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool known = false;
        for (const char* name : allowed) known = known || key == name;
        if (!known) fail("unknown key '" + key + "' in " + ctx);
    }
}

template <typename T>
T get_required(const json& obj, const char* name, const std::string& ctx) {
    if (!obj.contains(name)) fail(ctx + " is missing required field '" + name + "'");
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception& e) {
        fail("field '" + std::string(name) + "' in " + ctx + ": " + e.what());
    }
}

template <typename T>
T get_optional(const json& obj, const char* name, T fallback, const std::string& ctx) {
    if (!obj.contains(name)) return fallback;
    try {
        return obj.at(name).get<T>();
    } catch (const json::exception& e) {
        fail("field '" + std::string(name) + "' in " + ctx + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Config block parsing

EnvSpec parse_env(const json& j) {
    require_object(j, "env");
    EnvSpec env;
    env.family = get_required<std::string>(j, "family", "env");
    if (env.family == "hash") {
        check_keys(j, {"family", "m", "key", "horizon"}, "env (hash)");
        env.m = get_required<int>(j, "m", "env");
        env.key = get_required<std::uint64_t>(j, "key", "env");
        env.horizon = get_optional<int>(j, "horizon", 0, "env");
    } else if (env.family == "prf") {
        check_keys(j, {"family", "m", "key", "action_bits", "horizon"}, "env (prf)");
        env.m = get_required<int>(j, "m", "env");
        env.key = get_required<std::uint64_t>(j, "key", "env");
        env.action_bits = get_optional<int>(j, "action_bits", 0, "env");
        env.horizon = get_optional<int>(j, "horizon", 0, "env");
    } else if (env.family == "gridworld_hidden") {
        check_keys(j, {"family", "width", "height", "start_cell", "goal_cell", "step_cap"},
                   "env (gridworld_hidden)");
        env.width = get_required<int>(j, "width", "env");
        env.height = get_required<int>(j, "height", "env");
        env.start_cell = get_required<int>(j, "start_cell", "env");
        env.goal_cell = get_required<int>(j, "goal_cell", "env");
        env.step_cap = get_optional<int>(j, "step_cap", 500, "env");
    } else if (env.family == "gridworld_goals") {
        check_keys(j, {"family", "width", "height", "start_cell", "key", "step_cap"},
                   "env (gridworld_goals)");
        env.width = get_required<int>(j, "width", "env");
        env.height = get_required<int>(j, "height", "env");
        env.start_cell = get_required<int>(j, "start_cell", "env");
        env.key = get_required<std::uint64_t>(j, "key", "env");
        env.step_cap = get_optional<int>(j, "step_cap", 500, "env");
    } else {
        fail("unknown env family '" + env.family + "'");
    }
    return env;
}

json env_to_json(const EnvSpec& env) {
    json j{{"family", env.family}};
    if (env.family == "hash" || env.family == "prf") {
        j["m"] = env.m;
        j["key"] = env.key;
        j["horizon"] = env.horizon;
        if (env.family == "prf") j["action_bits"] = env.action_bits;
    } else {
        j["width"] = env.width;
        j["height"] = env.height;
        j["start_cell"] = env.start_cell;
        j["step_cap"] = env.step_cap;
        if (env.family == "gridworld_hidden") j["goal_cell"] = env.goal_cell;
        if (env.family == "gridworld_goals") j["key"] = env.key;
    }
    return j;
}

WrapperSpec parse_wrapper(const json& j) {
    require_object(j, "wrapper");
    WrapperSpec w;
    w.kind = get_required<std::string>(j, "kind", "wrapper");
    if (w.kind == "none" || w.kind == "theta") {
        check_keys(j, {"kind"}, "wrapper (" + w.kind + ")");
    } else if (w.kind == "history") {
        check_keys(j, {"kind", "k", "include_actions"}, "wrapper (history)");
        w.k = get_required<int>(j, "k", "wrapper");
        w.include_actions = get_optional<bool>(j, "include_actions", true, "wrapper");
        if (w.k < 1) fail("history wrapper needs k >= 1");
    } else if (w.kind == "obfuscate") {
        check_keys(j, {"kind", "key"}, "wrapper (obfuscate)");
        w.key = get_required<std::uint64_t>(j, "key", "wrapper");
    } else {
        fail("unknown wrapper kind '" + w.kind + "'");
    }
    return w;
}

json wrapper_to_json(const WrapperSpec& w) {
    json j{{"kind", w.kind}};
    if (w.kind == "history") {
        j["k"] = w.k;
        j["include_actions"] = w.include_actions;
    } else if (w.kind == "obfuscate") {
        j["key"] = w.key;
    }
    return j;
}

AgentSpec parse_agent(const json& j) {
    require_object(j, "agent");
    AgentSpec spec;
    spec.kind = get_required<std::string>(j, "kind", "agent");
    spec.hyper = json::object();
    for (const auto& [key, value] : j.items()) {
        if (key != "kind") spec.hyper[key] = value;
    }
    // Instantiate once so unknown kinds/hyperparameters fail at parse time.
    agents::make_agent(spec.kind, spec.hyper);
    return spec;
}

json agent_to_json(const AgentSpec& spec) {
    json j = spec.hyper;
    j["kind"] = spec.kind;
    return j;
}

CheckSpec parse_check(const json& j) {
    require_object(j, "check");
    check_keys(j, {"mode", "tie_tol", "slack", "budget"}, "check");
    CheckSpec c;
    c.mode = get_optional<std::string>(j, "mode", c.mode, "check");
    if (c.mode != "exact" && c.mode != "strong") fail("check.mode must be 'exact' or 'strong'");
    c.tie_tol = get_optional<double>(j, "tie_tol", c.tie_tol, "check");
    c.slack = get_optional<double>(j, "slack", c.slack, "check");
    c.budget = get_optional<std::uint64_t>(j, "budget", c.budget, "check");
    return c;
}

json check_to_json(const CheckSpec& c) {
    return {{"mode", c.mode}, {"tie_tol", c.tie_tol}, {"slack", c.slack}, {"budget", c.budget}};
}

SweepSpec parse_sweep(const json& j) {
    require_object(j, "sweep");
    check_keys(j, {"axis", "values"}, "sweep");
    SweepSpec s;
    s.axis = get_required<std::string>(j, "axis", "sweep");
    if (s.axis != "n_train" && s.axis != "m" && s.axis != "wrapper") {
        fail("sweep.axis must be one of n_train | m | wrapper");
    }
    if (!j.contains("values") || !j.at("values").is_array() || j.at("values").empty()) {
        fail("sweep.values must be a nonempty array");
    }
    for (const json& v : j.at("values")) {
        if (s.axis == "wrapper") {
            parse_wrapper(v);  // validates
        } else if (!v.is_number_integer() || v.get<long long>() < 1) {
            fail("sweep.values for axis '" + s.axis + "' must be integers >= 1");
        }
        s.values.push_back(v);
    }
    return s;
}

json sweep_to_json(const SweepSpec& s) {
    return {{"axis", s.axis}, {"values", s.values}};
}

OracleSpec parse_oracle(const json& j) {
    require_object(j, "oracle");
    check_keys(j, {"kind", "instances"}, "oracle");
    OracleSpec o;
    o.kind = get_required<std::string>(j, "kind", "oracle");
    if (o.kind != "dp_enum" && o.kind != "gradient_fd") {
        fail("oracle.kind must be 'dp_enum' or 'gradient_fd'");
    }
    o.instances = get_optional<int>(j, "instances", o.instances, "oracle");
    if (o.instances < 1) fail("oracle.instances must be >= 1");
    return o;
}

json oracle_to_json(const OracleSpec& o) {
    return {{"kind", o.kind}, {"instances", o.instances}};
}

bool valid_run_id(const std::string& id) {
    if (id.empty()) return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Shared runner plumbing

void log_line(const RunOptions& opts, int level, const std::string& msg) {
    if (opts.log_level >= level) std::cerr << "[bench] " << msg << "\n";
}

std::filesystem::path output_path(const RunConfig& cfg, const RunOptions& opts,
                                  const std::string& suffix) {
    const std::string dir = opts.output_dir.empty() ? cfg.output_dir : opts.output_dir;
    std::filesystem::create_directories(dir);
    return std::filesystem::path(dir) / (cfg.run_id + suffix);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out.good()) throw std::runtime_error("failed to write " + path.string());
}

void write_json_doc(const std::filesystem::path& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

std::uint64_t views_in(const EnvSpec& env) {
    if (env.family == "hash" || env.family == "prf") return std::uint64_t{1} << env.m;
    return static_cast<std::uint64_t>(env.width) * env.height + 1;
}

/// Sim-side wrapper application: same parameter space, wrapped episode sims.
family::MdpFamily wrap_sim_family(const family::MdpFamily& base, const EnvSpec& env,
                                  const WrapperSpec& wrapper,
                                  const std::vector<family::Theta>& ordered_thetas) {
    if (wrapper.kind == "none") return base;
    auto inner = std::make_shared<family::MdpFamily>(base);
    family::MdpFamily::SimFn sim_fn;
    if (wrapper.kind == "theta") {
        auto index = std::make_shared<std::map<family::Theta, int>>();
        for (std::size_t i = 0; i < ordered_thetas.size(); ++i) {
            index->emplace(ordered_thetas[i], static_cast<int>(i));
        }
        sim_fn = [inner, index](const family::Theta& theta) -> std::unique_ptr<family::EpisodeSim> {
            auto it = index->find(theta);
            if (it == index->end()) {
                throw std::logic_error("theta wrapper: parameter outside the tagged sample");
            }
            return std::make_unique<wrappers::ThetaTaggedSim>(inner->sim(theta), it->second);
        };
    } else if (wrapper.kind == "history") {
        const int k = wrapper.k;
        const bool include_actions = wrapper.include_actions;
        sim_fn = [inner, k, include_actions](const family::Theta& theta)
            -> std::unique_ptr<family::EpisodeSim> {
            return std::make_unique<wrappers::HistorySim>(inner->sim(theta), k, include_actions);
        };
    } else if (wrapper.kind == "obfuscate") {
        auto perm = std::make_shared<const std::vector<int>>(
            wrappers::view_permutation(wrapper.key, static_cast<int>(views_in(env))));
        sim_fn = [inner, perm](const family::Theta& theta) -> std::unique_ptr<family::EpisodeSim> {
            return std::make_unique<wrappers::ObfuscatedSim>(inner->sim(theta), *perm);
        };
    } else {
        fail("unknown wrapper kind '" + wrapper.kind + "'");
    }
    auto build = [inner](const family::Theta& theta) { return inner->member(theta); };
    return family::MdpFamily(base.params(), std::move(build), base.shared_spaces(),
                             std::move(sim_fn));
}

/// Table-side wrapper application for optimality checking.
family::MdpFamily wrap_table_family(const family::MdpFamily& base, const WrapperSpec& wrapper,
                                    const family::EmpiricalSample& sample) {
    if (wrapper.kind == "none") return base;
    if (wrapper.kind == "theta") return wrappers::augment_with_theta(base, sample);
    if (wrapper.kind == "history") {
        return wrappers::history_wrapper(base, sample, wrapper.k, wrapper.include_actions);
    }
    if (wrapper.kind == "obfuscate") {
        if (sample.thetas.empty()) throw EmptySample("wrapper application needs a nonempty sample");
        const int states = base.member(sample.thetas.front()).num_states();
        auto perm = std::make_shared<const std::vector<int>>(
            wrappers::view_permutation(wrapper.key, states));
        auto inner = std::make_shared<family::MdpFamily>(base);
        auto build = [inner, perm](const family::Theta& theta) {
            return wrappers::obfuscate_observations(inner->member(theta), *perm);
        };
        return family::MdpFamily(base.params(), std::move(build), base.shared_spaces());
    }
    fail("unknown wrapper kind '" + wrapper.kind + "'");
}

/// The optimality checker wants stationary (unbounded-horizon) members;
/// finite-horizon members are time-folded transparently.
family::MdpFamily fold_if_finite(const family::MdpFamily& fam,
                                 const family::EmpiricalSample& sample) {
    if (sample.thetas.empty()) throw EmptySample("optimality check needs a nonempty sample");
    if (!fam.member(sample.thetas.front()).horizon().is_finite()) return fam;
    auto inner = std::make_shared<family::MdpFamily>(fam);
    auto build = [inner](const family::Theta& theta) {
        return wrappers::fold_time(inner->member(theta));
    };
    return family::MdpFamily(fam.params(), std::move(build), fam.shared_spaces());
}

family::EmpiricalSample check_sample(const family::MdpFamily& base, const RunConfig& cfg) {
    if (base.params().is_finite()) {
        family::EmpiricalSample sample;
        sample.thetas = base.params().thetas();
        sample.master_seed = cfg.master_seed;
        sample.label = "all";
        return sample;
    }
    if (cfg.n_train < 1) fail("checking a generative family needs n_train >= 1");
    auto split = family::sample_split(base.params(), cfg.n_train, 0,
                                      derive_seed(cfg.master_seed, "check-split"));
    return split.first;
}

json theta_json(const family::Theta& theta) {
    json fields = json::object();
    for (const auto& [name, value] : theta.fields) fields[name] = value;
    return {{"seed", theta.seed}, {"fields", std::move(fields)}};
}

std::string verdict_name(optimality::Verdict v) {
    switch (v) {
        case optimality::Verdict::SharedOptimal: return "SharedOptimal";
        case optimality::Verdict::Conflict: return "Conflict";
        default: return "Unknown";
    }
}

json certificate_json(const RunConfig& cfg, const CheckSpec& spec,
                      const optimality::OptimalityCertificate& cert) {
    json doc{{"schema_version", 1},
             {"run_id", cfg.run_id},
             {"mode", spec.mode},
             {"verdict", verdict_name(cert.verdict)},
             {"slack", cert.slack},
             {"budget_spent", cert.budget_spent}};
    if (cert.verdict == optimality::Verdict::SharedOptimal) {
        doc["policy"] = cert.policy.action;
        json values = json::array();
        for (const auto& [theta, value] : cert.per_theta_values) {
            json entry = theta_json(theta);
            entry["start_value"] = value;
            values.push_back(std::move(entry));
        }
        doc["per_theta_values"] = std::move(values);
    }
    if (cert.witness) {
        json argmax = json::array();
        for (const auto& [theta, actions] : cert.witness->per_theta_argmax) {
            json entry = theta_json(theta);
            entry["actions"] = actions;
            argmax.push_back(std::move(entry));
        }
        json evidence = json::array();
        for (const auto& [theta, path] : cert.witness->reachability_evidence) {
            json entry = theta_json(theta);
            entry["path"] = path;
            evidence.push_back(std::move(entry));
        }
        doc["witness"] = {{"state", cert.witness->state},
                          {"per_theta_argmax", std::move(argmax)},
                          {"reachability_evidence", std::move(evidence)}};
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Gap rows

struct Row {
    std::string env;
    std::string dims;
    std::string wrapper;
    std::string agent;
    int n_train = 0;
    int repeat_index = 0;
    double j_train = 0.0;
    double j_population = 0.0;
    double gap = 0.0;
    std::optional<double> gcs_value;
    std::string verdict;
    double wall_seconds = 0.0;
};

std::string row_csv(const RunConfig& cfg, const Row& r) {
    std::ostringstream line;
    line << cfg.run_id << ',' << r.env << ',' << r.dims << ',' << r.wrapper << ',' << r.agent
         << ',' << r.n_train << ',' << r.repeat_index << ',' << format_double(r.j_train) << ','
         << format_double(r.j_population) << ',' << format_double(r.gap) << ','
         << (r.gcs_value ? format_double(*r.gcs_value) : std::string()) << ',' << r.verdict << ','
         << format_double(r.wall_seconds) << '\n';
    return line.str();
}

void validate_gap_config(const RunConfig& cfg) {
    if (!cfg.agent) fail("gap runs need an agent block");
    if (cfg.n_train < 1) fail("gap runs need n_train >= 1");
    if (cfg.n_eval < 1 && !cfg.eval_equals_train) fail("gap runs need n_eval >= 1");
    if (cfg.episodes < 0) fail("episodes must be >= 0");
    if (cfg.compute_gcs) {
        if (cfg.agent->kind != "reinforce") {
            fail("compute_gcs needs the reinforce agent (it exports a softmax policy)");
        }
        if (cfg.env.family != "gridworld_hidden" && cfg.env.family != "gridworld_goals") {
            fail("compute_gcs needs a family whose sims observe states on goal channel 0");
        }
    }
}

/// One (config point, repeat) work item. All seeds derive from the config's
/// master seed and the repeat index, never from the schedule.
Row run_point_repeat(const RunConfig& cfg, int repeat_index) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t repeat_master =
        derive_seed(cfg.master_seed, "repeat", static_cast<std::uint64_t>(repeat_index));
    const family::MdpFamily base = build_env(cfg.env);
    auto split = family::sample_split(base.params(), cfg.n_train,
                                      cfg.eval_equals_train ? 0 : cfg.n_eval,
                                      derive_seed(repeat_master, "split"));
    const family::EmpiricalSample& train_sample = split.first;
    const family::EmpiricalSample& eval_sample =
        cfg.eval_equals_train ? split.first : split.second;

    std::vector<family::Theta> ordered = train_sample.thetas;
    if (!cfg.eval_equals_train) {
        ordered.insert(ordered.end(), eval_sample.thetas.begin(), eval_sample.thetas.end());
    }
    const family::MdpFamily wrapped = wrap_sim_family(base, cfg.env, cfg.wrapper, ordered);

    auto agent = agents::make_agent(cfg.agent->kind, cfg.agent->hyper);
    agents::TrainOptions train_opts;
    train_opts.eval_episodes_per_theta = cfg.eval_episodes_per_theta;
    const agents::TrainResult curve =
        agents::train(*agent, wrapped, train_sample, cfg.episodes,
                      derive_seed(repeat_master, "train"), train_opts);
    const agents::EvalResult eval =
        agents::evaluate(*agent, wrapped, eval_sample, cfg.eval_episodes_per_theta,
                         derive_seed(repeat_master, "eval"));

    Row row;
    row.env = cfg.env.family;
    row.dims = env_dims(cfg.env);
    row.wrapper = cfg.wrapper.kind;
    row.agent = cfg.agent->kind;
    row.n_train = cfg.n_train;
    row.repeat_index = repeat_index;
    row.j_train = curve.curve.back().reward;
    row.j_population = eval.mean;
    row.gap = row.j_train - row.j_population;

    if (cfg.compute_gcs) {
        const auto* reinforce = dynamic_cast<const agents::ReinforceAgent*>(agent.get());
        if (reinforce == nullptr) fail("compute_gcs needs the reinforce agent");
        const TabularMdp probe = base.member(train_sample.thetas.front());
        const SoftmaxPolicy policy =
            reinforce->tabular_policy(probe.num_states(), probe.num_actions(), 0);
        row.gcs_value = agents::gcs(policy, base, train_sample, eval_sample);
    }
    if (cfg.run_checker) {
        const CheckSpec spec = cfg.check.value_or(CheckSpec{});
        const family::MdpFamily checkable =
            fold_if_finite(wrap_table_family(base, cfg.wrapper, train_sample), train_sample);
        const optimality::OptimalityCertificate cert =
            spec.mode == "strong"
                ? optimality::strong_check(checkable, train_sample, spec.tie_tol)
                : optimality::exact_check(checkable, train_sample, spec.tie_tol, spec.slack,
                                          spec.budget);
        row.verdict = verdict_name(cert.verdict);
    }
    if (cfg.record_timing) {
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    return row;
}

RunConfig specialize(const RunConfig& cfg, const std::string& axis, const json& value) {
    RunConfig point = cfg;
    if (axis == "n_train") {
        point.n_train = value.get<int>();
    } else if (axis == "m") {
        if (cfg.env.family != "hash" && cfg.env.family != "prf") {
            fail("sweep axis 'm' needs a hash or prf env");
        }
        point.env.m = value.get<int>();
    } else if (axis == "wrapper") {
        point.wrapper = parse_wrapper(value);
    } else {
        fail("unknown sweep axis '" + axis + "'");
    }
    return point;
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double start_value(const TabularMdp& mdp, const std::vector<double>& v) {
    double total = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) total += mdp.start_dist()[s] * v[s];
    return total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config API

RunConfig RunConfig::parse(const json& doc) {
    require_object(doc, "config");
    check_keys(doc,
               {"schema_version", "run_id", "master_seed", "env", "wrapper", "agent", "n_train",
                "n_eval", "episodes", "eval_episodes_per_theta", "repeats", "output_dir",
                "record_timing", "compute_gcs", "run_checker", "eval_equals_train", "check",
                "sweep", "oracle"},
               "config");
    RunConfig cfg;
    cfg.schema_version = get_required<int>(doc, "schema_version", "config");
    if (cfg.schema_version != 1) fail("unsupported schema_version (expected 1)");
    cfg.run_id = get_required<std::string>(doc, "run_id", "config");
    if (!valid_run_id(cfg.run_id)) {
        fail("run_id must be nonempty and use only [A-Za-z0-9._-]");
    }
    cfg.master_seed = get_required<std::uint64_t>(doc, "master_seed", "config");
    if (!doc.contains("env")) fail("config is missing required field 'env'");
    cfg.env = parse_env(doc.at("env"));
    if (doc.contains("wrapper")) cfg.wrapper = parse_wrapper(doc.at("wrapper"));
    if (doc.contains("agent")) cfg.agent = parse_agent(doc.at("agent"));
    cfg.n_train = get_optional<int>(doc, "n_train", 0, "config");
    cfg.n_eval = get_optional<int>(doc, "n_eval", 0, "config");
    cfg.episodes = get_optional<int>(doc, "episodes", 0, "config");
    cfg.eval_episodes_per_theta = get_optional<int>(doc, "eval_episodes_per_theta", 1, "config");
    cfg.repeats = get_optional<int>(doc, "repeats", 1, "config");
    cfg.output_dir = get_optional<std::string>(doc, "output_dir", ".", "config");
    cfg.record_timing = get_optional<bool>(doc, "record_timing", false, "config");
    cfg.compute_gcs = get_optional<bool>(doc, "compute_gcs", false, "config");
    cfg.run_checker = get_optional<bool>(doc, "run_checker", false, "config");
    cfg.eval_equals_train = get_optional<bool>(doc, "eval_equals_train", false, "config");
    if (doc.contains("check")) cfg.check = parse_check(doc.at("check"));
    if (doc.contains("sweep")) cfg.sweep = parse_sweep(doc.at("sweep"));
    if (doc.contains("oracle")) cfg.oracle = parse_oracle(doc.at("oracle"));
    if (cfg.n_train < 0 || cfg.n_eval < 0) fail("n_train and n_eval must be >= 0");
    if (cfg.episodes < 0) fail("episodes must be >= 0");
    if (cfg.eval_episodes_per_theta < 1) fail("eval_episodes_per_theta must be >= 1");
    if (cfg.repeats < 1) fail("repeats must be >= 1");
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.good()) fail("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        fail("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse(doc);
}

json RunConfig::to_json() const {
    json doc{{"schema_version", schema_version},
             {"run_id", run_id},
             {"master_seed", master_seed},
             {"env", env_to_json(env)},
             {"wrapper", wrapper_to_json(wrapper)},
             {"n_train", n_train},
             {"n_eval", n_eval},
             {"episodes", episodes},
             {"eval_episodes_per_theta", eval_episodes_per_theta},
             {"repeats", repeats},
             {"output_dir", output_dir},
             {"record_timing", record_timing},
             {"compute_gcs", compute_gcs},
             {"run_checker", run_checker},
             {"eval_equals_train", eval_equals_train}};
    if (agent) doc["agent"] = agent_to_json(*agent);
    if (check) doc["check"] = check_to_json(*check);
    if (sweep) doc["sweep"] = sweep_to_json(*sweep);
    if (oracle) doc["oracle"] = oracle_to_json(*oracle);
    return doc;
}

// ---------------------------------------------------------------------------
// Exposed pieces

family::MdpFamily build_env(const EnvSpec& env) {
    if (env.family == "hash") {
        return env_zoo::make_hash_family(env.m, env.key, env.horizon);
    }
    if (env.family == "prf") {
        const int action_bits = env.action_bits == 0 ? env.m : env.action_bits;
        return env_zoo::make_prf_family(env.m, env.key, action_bits, env.horizon);
    }
    if (env.family == "gridworld_hidden") {
        return env_zoo::make_hidden_param_gridworld(env.width, env.height,
                                                    {env.start_cell, env.goal_cell}, env.step_cap);
    }
    if (env.family == "gridworld_goals") {
        return env_zoo::make_goal_variant_gridworld(env.width, env.height, env.start_cell,
                                                    env.key, env.step_cap);
    }
    fail("unknown env family '" + env.family + "'");
}

std::string env_dims(const EnvSpec& env) {
    if (env.family == "hash" || env.family == "prf") return "m=" + std::to_string(env.m);
    return std::to_string(env.width) + "x" + std::to_string(env.height);
}

std::string csv_header() {
    return "run_id,env,dims,wrapper,agent,n_train,repeat,j_train,j_population,gap,gcs,verdict,"
           "wall_seconds";
}

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (workers < 1) workers = 1;
    if (workers == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t first_error = n;
    std::exception_ptr error;
    auto body = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(mu);
                // Keep the lowest-index exception so failures are schedule-independent.
                if (i < first_error) {
                    first_error = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Runners

int run_check(const RunConfig& cfg, const RunOptions& opts) {
    const CheckSpec spec = cfg.check.value_or(CheckSpec{});
    const family::MdpFamily base = build_env(cfg.env);
    if (!base.tabular()) fail("run_check needs a tabularizable env");
    const family::EmpiricalSample sample = check_sample(base, cfg);
    const family::MdpFamily checkable =
        fold_if_finite(wrap_table_family(base, cfg.wrapper, sample), sample);
    const optimality::OptimalityCertificate cert =
        spec.mode == "strong"
            ? optimality::strong_check(checkable, sample, spec.tie_tol)
            : optimality::exact_check(checkable, sample, spec.tie_tol, spec.slack, spec.budget);
    const json doc = certificate_json(cfg, spec, cert);
    write_json_doc(output_path(cfg, opts, ".certificate.json"), doc);
    log_line(opts, 1, "check " + cfg.run_id + ": " + verdict_name(cert.verdict));
    switch (cert.verdict) {
        case optimality::Verdict::SharedOptimal: return 0;
        case optimality::Verdict::Conflict: return 2;
        default: return 3;
    }
}

int run_gap(const RunConfig& cfg, const RunOptions& opts) {
    validate_gap_config(cfg);
    std::vector<Row> rows(static_cast<std::size_t>(cfg.repeats));
    parallel_for(rows.size(), opts.workers,
                 [&](std::size_t i) { rows[i] = run_point_repeat(cfg, static_cast<int>(i)); });
    std::string csv = csv_header() + "\n";
    for (const Row& row : rows) csv += row_csv(cfg, row);
    write_text(output_path(cfg, opts, ".csv"), csv);
    log_line(opts, 1, "gap " + cfg.run_id + ": " + std::to_string(rows.size()) + " rows");
    return 0;
}

int run_sweep(const RunConfig& cfg, const RunOptions& opts) {
    if (!cfg.sweep) fail("run_sweep needs a sweep block");
    const SweepSpec& sweep = *cfg.sweep;
    std::vector<RunConfig> points;
    points.reserve(sweep.values.size());
    for (const json& value : sweep.values) points.push_back(specialize(cfg, sweep.axis, value));
    for (const RunConfig& point : points) validate_gap_config(point);

    const std::size_t repeats = static_cast<std::size_t>(cfg.repeats);
    std::vector<Row> rows(points.size() * repeats);
    parallel_for(rows.size(), opts.workers, [&](std::size_t i) {
        const std::size_t point = i / repeats;
        const int repeat_index = static_cast<int>(i % repeats);
        rows[i] = run_point_repeat(points[point], repeat_index);
    });

    std::string csv = csv_header() + "\n";
    for (const Row& row : rows) csv += row_csv(cfg, row);
    write_text(output_path(cfg, opts, ".csv"), csv);

    json summary_points = json::array();
    for (std::size_t p = 0; p < points.size(); ++p) {
        std::vector<double> gaps, trains, pops;
        for (std::size_t r = 0; r < repeats; ++r) {
            const Row& row = rows[p * repeats + r];
            gaps.push_back(row.gap);
            trains.push_back(row.j_train);
            pops.push_back(row.j_population);
        }
        const double mean_gap =
            std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
        summary_points.push_back(
            {{"value", sweep.values[p]},
             {"mean_gap", mean_gap},
             {"median_gap", median_of(gaps)},
             {"mean_j_train",
              std::accumulate(trains.begin(), trains.end(), 0.0) / static_cast<double>(repeats)},
             {"mean_j_population",
              std::accumulate(pops.begin(), pops.end(), 0.0) / static_cast<double>(repeats)},
             {"repeats", cfg.repeats}});
    }
    const json summary{{"schema_version", 1},
                       {"run_id", cfg.run_id},
                       {"axis", sweep.axis},
                       {"points", std::move(summary_points)}};
    write_json_doc(output_path(cfg, opts, ".summary.json"), summary);
    log_line(opts, 1, "sweep " + cfg.run_id + ": " + std::to_string(rows.size()) + " rows");
    return 0;
}

int run_oracle(const RunConfig& cfg, const RunOptions& opts) {
    if (!cfg.oracle) fail("run_oracle needs an oracle block");
    const OracleSpec& oracle = *cfg.oracle;
    std::vector<json> entries(static_cast<std::size_t>(oracle.instances));
    parallel_for(entries.size(), opts.workers, [&](std::size_t i) {
        const std::uint64_t seed =
            derive_seed(cfg.master_seed, "oracle", static_cast<std::uint64_t>(i));
        auto dims = make_rng(seed, "dims");
        const int states = 2 + static_cast<int>(uniform_below(dims, 5));   // 2..6
        const int actions = 1 + static_cast<int>(uniform_below(dims, 3));  // 1..3
        const TabularMdp mdp = oracles::make_random_mdp(derive_seed(seed, "mdp"), states,
                                                        actions, 0.9, Horizon::unbounded());
        if (oracle.kind == "dp_enum") {
            const ValueTables tables = value_iteration(mdp, 1e-12);
            const double vi_value = start_value(mdp, tables.v);
            const oracles::EnumerationResult best = oracles::enumerate_policies(mdp);
            entries[i] = {{"seed", seed},
                          {"num_states", states},
                          {"num_actions", actions},
                          {"vi_value", vi_value},
                          {"enum_value", best.best_value},
                          {"policies_evaluated", best.policies_evaluated},
                          {"abs_diff", std::abs(vi_value - best.best_value)}};
        } else {
            const SoftmaxPolicy policy =
                oracles::make_random_logits(derive_seed(seed, "logits"), states, actions);
            const std::vector<double> exact = exact_policy_gradient(mdp, policy);
            const std::vector<double> approx = oracles::fd_gradient(mdp, policy);
            // Mixed absolute/relative agreement: the 1e-4 floor in the denominator
            // makes an identically-zero gradient (single-action instances) count as
            // agreement down to 1e-8 absolute, while sizeable gradients are held to
            // a true relative comparison against their largest component.
            double linf = 0.0;
            double max_abs = 0.0;
            for (std::size_t c = 0; c < exact.size(); ++c) {
                linf = std::max(linf, std::abs(approx[c]));
                max_abs = std::max(max_abs, std::abs(exact[c] - approx[c]));
            }
            entries[i] = {{"seed", seed},
                          {"num_states", states},
                          {"num_actions", actions},
                          {"grad_linf", linf},
                          {"max_abs_err", max_abs},
                          {"max_rel_err", max_abs / (1e-4 + linf)}};
        }
    });
    const json doc{{"schema_version", 1},
                   {"run_id", cfg.run_id},
                   {"kind", oracle.kind},
                   {"instances", oracle.instances},
                   {"results", entries}};
    write_json_doc(output_path(cfg, opts, ".oracle.json"), doc);
    log_line(opts, 1, "oracle " + cfg.run_id + ": " + std::to_string(entries.size()) + " entries");
    return 0;
}

}  // namespace rlgen::bench
