#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctbrl/agent.hpp"

namespace ctbrl {

enum class Protocol { kOffline, kOnline };

Protocol parse_protocol(const std::string& name);
std::string to_string(Protocol p);

/// Invalid experiment configuration; names the offending line and key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(int line, std::string field, const std::string& message);
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    int line_;
    std::string field_;
};

/// Malformed raw CSV; names the offending row (1-based line number).
class CsvParseError : public std::runtime_error {
public:
    CsvParseError(int row, const std::string& message);
    int row() const { return row_; }

private:
    int row_;
};

struct ExperimentConfig {
    Protocol protocol = Protocol::kOffline;
    AgentConfig agent;
    std::vector<int> k_schedule = {10, 20, 30, 40, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000};
    int runs = 1;
    std::uint64_t seed = 1;
    int threads = 1;
    std::filesystem::path out_dir = "results";
    bool record_wall_ms = false;  // off: the wall_ms column is 0 and reruns are byte-identical
    bool checkpoints = false;     // write the final posterior / policy of every run
};

/// Flat `key = value` text; `#` starts a comment, blank lines are ignored.
///
/// Keys: protocol, agent, env, runs, seed, threads, out, k_schedule
/// (comma-separated), episodes, eval_episodes, rollout_horizon, n_states,
/// api_iterations, model_samples, ridge, lspi_iterations, lspi_ridge,
/// epsilon_decay, prior_precision, prior_scale, persistence_prior, zoom,
/// max_depth, stop_on_sustained_success, success_window, record_wall_ms,
/// checkpoints. Booleans are true/false. Unknown keys, malformed values and
/// repeated keys are errors.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Checks cross-field invariants (non-empty schedule, runs >= 1, ...).
void validate(const ExperimentConfig& cfg);

/// One raw CSV row. Offline: x = k and steps / discounted_return are means
/// over the evaluation episodes. Online: x = episode index (1-based).
struct RawRow {
    int run_id = 0;
    std::uint64_t seed = 0;
    std::string protocol;
    std::string agent;
    std::string env;
    int x = 0;
    double steps = 0.0;
    double discounted_return = 0.0;
    double wall_ms = 0.0;
};

struct RunFailure {
    int run_id = 0;
    int x = 0;  // k for offline runs, 0 for online runs
    std::string message;
};

struct ExperimentResult {
    std::vector<RawRow> rows;          // ordered by run, then x
    std::vector<RunFailure> failures;  // runs that threw; the batch continues
    std::vector<RunResult> runs;       // full results in task order
};

inline constexpr const char* kRawSchema = "ctbrl-raw/1";
inline constexpr const char* kCurveSchema = "ctbrl-curve/1";

/// Seed of run `run_id`. Each run (and offline each k) gets an independent
/// engine derived from it.
std::uint64_t run_seed(std::uint64_t master, int run_id);

/// Executes all runs, up to cfg.threads at a time.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_raw_csv(std::ostream& out, const std::vector<RawRow>& rows);
std::vector<RawRow> read_raw_csv(std::istream& in);

struct CurvePoint {
    std::string protocol;
    std::string agent;
    std::string env;
    int x = 0;
    double mean = 0.0;
    double ci95 = 0.0;  // 1.96 sd / sqrt(n), sample sd; 0 for n = 1
    double p5 = 0.0;
    double p95 = 0.0;
    int n = 0;
};

/// Linear interpolation between order statistics: h = (n - 1) p,
/// q = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
double percentile(std::vector<double> values, double p);

/// Groups rows by (protocol, agent, env, x) and summarizes `steps`.
std::vector<CurvePoint> aggregate(const std::vector<RawRow>& rows);
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& points);

/// run_experiment plus persistence: raw.csv, curve.csv, failures.csv and,
/// if enabled, checkpoints/run<id>[_k<k>].json under cfg.out_dir.
ExperimentResult run_to_directory(const ExperimentConfig& cfg);

}  // namespace ctbrl
