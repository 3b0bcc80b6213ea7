#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rlgen/family.hpp"

/// Config-driven experiment runner: optimality checks, generalization-gap
/// measurements, axis sweeps, and brute-force oracle golden files.
///
/// All outputs (CSV rows, JSON certificates and summaries) are byte-identical
/// for identical configs, at any worker count. Output files are truncated per
/// run; wall-clock columns print 0 unless timing is explicitly requested, so
/// that timing never breaks byte determinism by default.
namespace rlgen::bench {

// ---------------------------------------------------------------------------
// Config schema (JSON, schema_version 1, unknown keys rejected)

struct EnvSpec {
    std::string family;  // hash | prf | gridworld_hidden | gridworld_goals
    // hash / prf
    int m = 0;
    std::uint64_t key = 0;
    int horizon = 0;      // 0: family default (m^2)
    int action_bits = 0;  // prf only; 0: default m
    // gridworlds
    int width = 0;
    int height = 0;
    int start_cell = 0;
    int goal_cell = 0;
    int step_cap = 500;
    bool operator==(const EnvSpec&) const = default;
};

struct WrapperSpec {
    std::string kind = "none";  // none | theta | history | obfuscate
    int k = 1;                  // history window length
    bool include_actions = true;
    std::uint64_t key = 0;      // obfuscation permutation key
    bool operator==(const WrapperSpec&) const = default;
};

struct AgentSpec {
    std::string kind;        // agents::make_agent kinds
    nlohmann::json hyper = nlohmann::json::object();
    bool operator==(const AgentSpec&) const = default;
};

struct CheckSpec {
    std::string mode = "exact";  // exact | strong
    double tie_tol = 1e-9;
    double slack = -1.0;  // sentinel: scale-derived default
    std::uint64_t budget = 1000000;
    bool operator==(const CheckSpec&) const = default;
};

struct SweepSpec {
    std::string axis;  // n_train | m | wrapper
    std::vector<nlohmann::json> values;
    bool operator==(const SweepSpec&) const = default;
};

struct OracleSpec {
    std::string kind = "dp_enum";  // dp_enum | gradient_fd
    int instances = 20;
    bool operator==(const OracleSpec&) const = default;
};

struct RunConfig {
    int schema_version = 1;
    std::string run_id;
    std::uint64_t master_seed = 0;
    EnvSpec env;
    WrapperSpec wrapper;
    std::optional<AgentSpec> agent;
    int n_train = 0;
    int n_eval = 0;
    int episodes = 0;
    int eval_episodes_per_theta = 1;
    int repeats = 1;
    std::string output_dir = ".";
    bool record_timing = false;
    bool compute_gcs = false;
    bool run_checker = false;
    bool eval_equals_train = false;  // debug flag: force the eval split = train split
    std::optional<CheckSpec> check;
    std::optional<SweepSpec> sweep;
    std::optional<OracleSpec> oracle;

    bool operator==(const RunConfig&) const = default;

    /// Strict parse: requires schema_version 1, run_id, master_seed, env;
    /// rejects unknown keys at every level. Throws ConfigError.
    static RunConfig parse(const nlohmann::json& doc);
    static RunConfig parse_file(const std::string& path);
    /// Normalized document; parse(to_json()) == *this.
    nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Runner entry points (return process exit codes)

struct RunOptions {
    int workers = 1;
    std::string output_dir;  // overrides config when nonempty
    int log_level = 1;       // 0 quiet, 1 info, 2 debug (stderr only)
};

/// Optimality check over the configured (wrapped) family; writes
/// <run_id>.certificate.json. Exit code 0 SharedOptimal, 2 Conflict,
/// 3 Unknown.
int run_check(const RunConfig& cfg, const RunOptions& opts = {});

/// Train/eval gap measurement, one CSV row per repeat; writes <run_id>.csv.
int run_gap(const RunConfig& cfg, const RunOptions& opts = {});

/// Cross-product of the swept axis values and repeats; writes <run_id>.csv
/// and <run_id>.summary.json with per-point mean/median gaps.
int run_sweep(const RunConfig& cfg, const RunOptions& opts = {});

/// Brute-force oracle runs (exhaustive policy enumeration / finite-difference
/// gradients) emitting <run_id>.oracle.json golden files.
int run_oracle(const RunConfig& cfg, const RunOptions& opts = {});

// ---------------------------------------------------------------------------
// Pieces exposed for tests

/// Builds the base (unwrapped) family for an env spec.
family::MdpFamily build_env(const EnvSpec& env);

/// Short dimension label for CSV rows: "m=8" or "5x5".
std::string env_dims(const EnvSpec& env);

/// The CSV header line (without trailing newline).
std::string csv_header();

/// Shortest %.12g rendering used for all CSV floats.
std::string format_double(double value);

/// Order-preserving parallel map: runs fn(0..n-1) on `workers` threads; item
/// seeds must be derived from indices so the schedule cannot affect results.
/// The lowest-index exception, if any, is rethrown after all workers join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace rlgen::bench
