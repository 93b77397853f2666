#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctbrl/adp.hpp"
#include "ctbrl/context_tree.hpp"
#include "ctbrl/environments.hpp"
#include "ctbrl/features.hpp"

namespace ctbrl {

enum class AgentKind { kCtbrl, kLbrl, kLspiOnline, kLspiOffline };

AgentKind parse_agent_kind(const std::string& name);
std::string to_string(AgentKind kind);

/// ADP defaults for the agents: 16 model draws per (state, action).
inline AdpConfig default_adp() {
    AdpConfig a;
    a.model_samples = 16;
    return a;
}

struct AgentConfig {
    AgentKind kind = AgentKind::kCtbrl;
    std::string env = "pendulum";

    // Model prior, shared by every context: N = prior_precision * I,
    // W = prior_scale * I, and M = [I 0] ("the state persists") when
    // persistence_prior is set, else M = 0.
    bool persistence_prior = true;
    double prior_precision = 1e-3;
    double prior_scale = 1e-6;
    double zoom = 1.5;
    int max_depth = -1;        // 0: the single-model (LBRL) special case

    AdpConfig adp = default_adp();  // an empty sampler means uniform over the planning box
    LspiConfig lspi;           // discount is taken from the environment
    double epsilon_decay = 0.997;

    int rollout_horizon = 40;  // offline data collection
    int eval_episodes = 100;   // offline evaluation of the final policy
    int episodes = 1000;       // online episode budget

    /// Online runs may end as soon as `success_window` consecutive episodes
    /// succeed; the remaining budget is then not simulated.
    bool stop_on_sustained_success = false;
    int success_window = 10;

    bool keep_checkpoint = false;
    bool keep_transitions = false;  // record every transition the agent learned from
};

struct EpisodeRecord {
    int steps = 0;
    double discounted_return = 0.0;
    bool terminated = false;
};

struct RunResult {
    AgentKind kind = AgentKind::kCtbrl;
    std::string env;
    /// Online: one record per learning episode. Offline: one record per
    /// evaluation episode of the final policy.
    std::vector<EpisodeRecord> episodes;
    std::vector<std::string> warnings;  // e.g. failed planning steps
    int model_draws = 0;                // Thompson samples taken
    int planning_calls = 0;             // ADP / LSPI solves started
    std::size_t transitions_seen = 0;
    double planning_ms = 0.0;
    double acting_ms = 0.0;
    double inference_ms = 0.0;
    std::optional<nlohmann::json> checkpoint;  // posterior or policy at the end
    std::vector<Transition> transitions;       // only with keep_transitions

    double mean_steps() const;
    /// Fraction of episodes counted as successes for this environment.
    double success_rate() const;
};

/// The context-tree settings an agent with this config uses on `env`.
ContextTreeConfig context_tree_config(const AgentConfig& cfg, const Environment& env);

/// Pendulum: the horizon was reached upright. Mountain car: the goal was reached.
bool episode_succeeded(const Environment& env, const EpisodeRecord& e);

/// First 1-based episode index starting `window` consecutive successes, or
/// episodes.size() + 1 if there is none.
int first_sustained_success(const Environment& env, const std::vector<EpisodeRecord>& episodes, int window);

/// Thompson sampling on the context-tree posterior: the first episode is
/// uniform, each later one plans on a fresh posterior draw (warm-started
/// from the previous value weights) and acts greedily on it.
RunResult ctbrl_online(const AgentConfig& cfg, Rng& rng);
/// k uniform rollouts, one posterior draw, one plan, then evaluation.
RunResult ctbrl_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng);

/// Same protocols with one Bayesian linear model per action.
RunResult lbrl_online(const AgentConfig& cfg, Rng& rng);
RunResult lbrl_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng);

/// epsilon_t-greedy LSPI on the growing transition buffer, epsilon_t =
/// epsilon_decay^t over all steps so far; re-solved at every episode start.
RunResult lspi_online(const AgentConfig& cfg, Rng& rng);
RunResult lspi_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng);

/// Dispatch on cfg.kind. The online LSPI agent collects offline data the
/// same way as the offline one.
RunResult run_online(const AgentConfig& cfg, Rng& rng);
RunResult run_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng);

/// Flat per-action Bayesian linear-Gaussian models (no context tree).
class LinearBayesModel {
public:
    LinearBayesModel(int action_count, int state_dim, const MniwPrior& prior);
    void observe(const State& s, int a, const State& s_next);
    SampledMDP sample_mdp(const RewardModel& reward, double discount, Rng& rng) const;
    const MniwPosterior& model(int a) const { return models_[static_cast<std::size_t>(a)]; }

private:
    std::vector<MniwPosterior> models_;
};

}  // namespace ctbrl
