#include "ctbrl/agent.hpp"

#include <chrono>
#include <cmath>

namespace ctbrl {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_config(const AgentConfig& cfg) {
    require(cfg.epsilon_decay > 0.0 && cfg.epsilon_decay <= 1.0, "AgentConfig: epsilon_decay must lie in (0, 1]");
    require(cfg.prior_scale > 0.0 && cfg.prior_precision > 0.0 && cfg.zoom > 1.0,
            "AgentConfig: positive prior scales and zoom > 1 required");
    require(cfg.rollout_horizon > 0 && cfg.eval_episodes >= 0 && cfg.episodes >= 0,
            "AgentConfig: horizons and episode counts must be non-negative");
    require(cfg.success_window > 0, "AgentConfig: success_window must be positive");
}

EpisodeRecord summarize(const EpisodeLog& log) { return {log.steps, log.discounted_return, log.terminated}; }

AdpConfig adp_for(const AgentConfig& cfg, const Environment& env) {
    AdpConfig adp = cfg.adp;
    if (!adp.sampler) adp.sampler = box_sampler(env.planning_box());
    return adp;
}

LspiConfig lspi_for(const AgentConfig& cfg, const Environment& env) {
    LspiConfig l = cfg.lspi;
    l.discount = env.discount();
    return l;
}

ContextTreeConfig tree_config(const AgentConfig& cfg, const Environment& env, int max_depth) {
    auto tc = ContextTreeConfig::for_state_dim(env.state_dim(), cfg.prior_scale);
    tc.prior.precision *= cfg.prior_precision;
    if (cfg.persistence_prior) tc.prior.mean.leftCols(env.state_dim()).setIdentity();
    tc.cover.zoom = cfg.zoom;
    tc.max_depth = max_depth;
    return tc;
}

/// Uniform-policy rollouts from the start distribution.
std::vector<Transition> collect_rollouts(const Environment& env, int k, int horizon, Rng& rng) {
    require(k >= 0, "offline protocol: k_rollouts must be non-negative");
    const UniformPolicy uniform(env.action_count());
    std::vector<Transition> data;
    const int h = std::min(horizon, env.horizon());
    for (int r = 0; r < k; ++r) {
        auto log = run_episode(env, uniform, h, rng);
        data.insert(data.end(), log.transitions.begin(), log.transitions.end());
    }
    return data;
}

void evaluate(const Environment& env, const Policy& policy, int episodes, Rng& rng, RunResult& out) {
    const auto start = Clock::now();
    for (int e = 0; e < episodes; ++e) out.episodes.push_back(summarize(run_episode(env, policy, env.horizon(), rng, false)));
    out.acting_ms += ms_since(start);
}

/// Thompson sampling with ADP, generic in the posterior representation.
template <class Posterior>
struct ModelBasedAgent {
    const AgentConfig& cfg;
    const Environment& env;
    Posterior& posterior;
    FeatureMapPtr basis;
    AdpConfig adp;
    RewardModel reward;
    std::optional<Vector> omega;
    PolicyPtr policy;

    /// One posterior draw and one plan; keeps the previous policy on failure.
    void plan(Rng& rng, RunResult& out) {
        const auto start = Clock::now();
        ++out.model_draws;
        ++out.planning_calls;
        try {
            auto mdp = std::make_shared<const SampledMDP>(posterior.sample_mdp(reward, env.discount(), rng));
            auto res = approximate_policy_iteration(mdp, basis, adp, rng, omega ? &*omega : nullptr);
            omega = res.omega;
            policy = res.policy;
        } catch (const NumericalError& e) {
            out.warnings.push_back(std::string("planning failed, keeping the previous policy: ") + e.what());
        }
        out.planning_ms += ms_since(start);
    }

    void learn(const std::vector<Transition>& data, RunResult& out) {
        const auto start = Clock::now();
        for (const auto& t : data) posterior.observe(t.s, t.a, t.s_next);
        out.transitions_seen += data.size();
        if (cfg.keep_transitions) out.transitions.insert(out.transitions.end(), data.begin(), data.end());
        out.inference_ms += ms_since(start);
    }

    RunResult online(Rng& rng, RunResult out) {
        policy = std::make_shared<UniformPolicy>(env.action_count());
        for (int e = 0; e < cfg.episodes; ++e) {
            if (e > 0) plan(rng, out);
            const auto start = Clock::now();
            auto log = run_episode(env, *policy, env.horizon(), rng);
            out.acting_ms += ms_since(start);
            learn(log.transitions, out);
            out.episodes.push_back(summarize(log));
            if (cfg.stop_on_sustained_success &&
                first_sustained_success(env, out.episodes, cfg.success_window) <= static_cast<int>(out.episodes.size()))
                break;
        }
        return out;
    }

    RunResult offline(int k, Rng& rng, RunResult out) {
        learn(collect_rollouts(env, k, cfg.rollout_horizon, rng), out);
        policy = std::make_shared<UniformPolicy>(env.action_count());
        plan(rng, out);
        evaluate(env, *policy, cfg.eval_episodes, rng, out);
        return out;
    }
};

RunResult header(const AgentConfig& cfg, AgentKind kind) {
    RunResult out;
    out.kind = kind;
    out.env = cfg.env;
    return out;
}

template <class Posterior>
ModelBasedAgent<Posterior> make_agent(const AgentConfig& cfg, const Environment& env, Posterior& posterior) {
    return ModelBasedAgent<Posterior>{cfg, env, posterior, make_default_basis(env), adp_for(cfg, env),
                                      env.reward_model(), std::nullopt, nullptr};
}

/// Explores with probability epsilon_decay^t, t counting every step taken.
class EpsilonGreedy final : public Policy {
public:
    EpsilonGreedy(PolicyPtr greedy, int actions, double decay, std::uint64_t& clock)
        : greedy_(std::move(greedy)), uniform_(actions), decay_(decay), clock_(clock) {}

    int act(const State& s, Rng& rng) const override {
        const double eps = std::pow(decay_, static_cast<double>(clock_++));
        if (!greedy_ || std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps) return uniform_.act(s, rng);
        return greedy_->act(s, rng);
    }

private:
    PolicyPtr greedy_;
    UniformPolicy uniform_;
    double decay_;
    std::uint64_t& clock_;
};

}  // namespace

AgentKind parse_agent_kind(const std::string& name) {
    if (name == "ctbrl") return AgentKind::kCtbrl;
    if (name == "lbrl") return AgentKind::kLbrl;
    if (name == "lspi_online") return AgentKind::kLspiOnline;
    if (name == "lspi_offline") return AgentKind::kLspiOffline;
    throw ContractViolation("unknown agent '" + name + "' (expected ctbrl, lbrl, lspi_online or lspi_offline)");
}

std::string to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::kCtbrl: return "ctbrl";
        case AgentKind::kLbrl: return "lbrl";
        case AgentKind::kLspiOnline: return "lspi_online";
        case AgentKind::kLspiOffline: return "lspi_offline";
    }
    return "unknown";
}

double RunResult::mean_steps() const {
    if (episodes.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& e : episodes) sum += e.steps;
    return sum / static_cast<double>(episodes.size());
}

double RunResult::success_rate() const {
    if (episodes.empty()) return 0.0;
    const auto e = make_environment(env);
    int ok = 0;
    for (const auto& ep : episodes) ok += episode_succeeded(*e, ep);
    return static_cast<double>(ok) / static_cast<double>(episodes.size());
}

ContextTreeConfig context_tree_config(const AgentConfig& cfg, const Environment& env) {
    return tree_config(cfg, env, cfg.max_depth);
}

bool episode_succeeded(const Environment& env, const EpisodeRecord& e) {
    if (env.name() == "pendulum") return !e.terminated && e.steps >= env.horizon();
    return e.terminated;
}

int first_sustained_success(const Environment& env, const std::vector<EpisodeRecord>& episodes, int window) {
    require(window > 0, "first_sustained_success: window must be positive");
    int run = 0;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
        run = episode_succeeded(env, episodes[i]) ? run + 1 : 0;
        if (run == window) return static_cast<int>(i) - window + 2;
    }
    return static_cast<int>(episodes.size()) + 1;
}

// ------------------------------------------------------------ model based

LinearBayesModel::LinearBayesModel(int action_count, int state_dim, const MniwPrior& prior) {
    require(action_count > 0 && state_dim > 0, "LinearBayesModel: need actions and a state dimension");
    require(prior.mean.rows() == state_dim && prior.mean.cols() == state_dim + 1,
            "LinearBayesModel: prior shape does not match the state dimension");
    models_.assign(static_cast<std::size_t>(action_count), MniwPosterior(prior));
}

void LinearBayesModel::observe(const State& s, int a, const State& s_next) {
    require(a >= 0 && a < static_cast<int>(models_.size()), "LinearBayesModel: action out of range");
    models_[static_cast<std::size_t>(a)].update(AugmentedInput::from_state(s), s_next);
}

SampledMDP LinearBayesModel::sample_mdp(const RewardModel& reward, double discount, Rng& rng) const {
    std::vector<LinearGaussianSample> draws;
    for (const auto& m : models_) draws.push_back(m.sample(rng));
    return SampledMDP::from_linear_models(std::move(draws), reward, discount);
}

RunResult ctbrl_online(const AgentConfig& cfg, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    GeneralizedContextTree tree(env->action_count(), tree_config(cfg, *env, cfg.max_depth));
    auto agent = make_agent(cfg, *env, tree);
    auto out = agent.online(rng, header(cfg, AgentKind::kCtbrl));
    if (cfg.keep_checkpoint) out.checkpoint = tree.to_json();
    return out;
}

RunResult ctbrl_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    GeneralizedContextTree tree(env->action_count(), tree_config(cfg, *env, cfg.max_depth));
    auto agent = make_agent(cfg, *env, tree);
    auto out = agent.offline(k_rollouts, rng, header(cfg, AgentKind::kCtbrl));
    if (cfg.keep_checkpoint) out.checkpoint = tree.to_json();
    return out;
}

RunResult lbrl_online(const AgentConfig& cfg, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    LinearBayesModel model(env->action_count(), env->state_dim(), tree_config(cfg, *env, 0).prior);
    auto agent = make_agent(cfg, *env, model);
    return agent.online(rng, header(cfg, AgentKind::kLbrl));
}

RunResult lbrl_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    LinearBayesModel model(env->action_count(), env->state_dim(), tree_config(cfg, *env, 0).prior);
    auto agent = make_agent(cfg, *env, model);
    return agent.offline(k_rollouts, rng, header(cfg, AgentKind::kLbrl));
}

// ------------------------------------------------------------------- LSPI

RunResult lspi_online(const AgentConfig& cfg, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    const auto basis = make_default_basis(*env, BasisUse::kLspi);
    const auto lcfg = lspi_for(cfg, *env);
    RunResult out = header(cfg, AgentKind::kLspiOnline);

    LspiSamples buffer;
    std::optional<Matrix> weights;
    PolicyPtr greedy;
    std::uint64_t clock = 0;
    for (int e = 0; e < cfg.episodes; ++e) {
        if (buffer.size() > 0) {
            const auto start = Clock::now();
            ++out.planning_calls;
            try {
                auto res = lstdq_lspi(buffer, basis, env->action_count(), lcfg, weights ? &*weights : nullptr);
                weights = res.weights;
                greedy = res.policy;
            } catch (const NumericalError& err) {
                out.warnings.push_back(std::string("LSPI failed, keeping the previous policy: ") + err.what());
            }
            out.planning_ms += ms_since(start);
        }
        const EpsilonGreedy policy(greedy, env->action_count(), cfg.epsilon_decay, clock);
        const auto start = Clock::now();
        auto log = run_episode(*env, policy, env->horizon(), rng);
        out.acting_ms += ms_since(start);
        for (const auto& t : log.transitions) buffer.add(t, *basis);
        out.transitions_seen += log.transitions.size();
        if (cfg.keep_transitions) out.transitions.insert(out.transitions.end(), log.transitions.begin(), log.transitions.end());
        out.episodes.push_back(summarize(log));
        if (cfg.stop_on_sustained_success &&
            first_sustained_success(*env, out.episodes, cfg.success_window) <= static_cast<int>(out.episodes.size()))
            break;
    }
    if (cfg.keep_checkpoint && greedy) out.checkpoint = static_cast<const LinearQPolicy&>(*greedy).to_json();
    return out;
}

RunResult lspi_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng) {
    check_config(cfg);
    const auto env = make_environment(cfg.env);
    const auto basis = make_default_basis(*env, BasisUse::kLspi);
    RunResult out = header(cfg, AgentKind::kLspiOffline);
    const auto data = collect_rollouts(*env, k_rollouts, cfg.rollout_horizon, rng);
    out.transitions_seen = data.size();
    if (cfg.keep_transitions) out.transitions = data;

    PolicyPtr policy = std::make_shared<UniformPolicy>(env->action_count());
    if (!data.empty()) {
        const auto start = Clock::now();
        ++out.planning_calls;
        try {
            auto res = lstdq_lspi(data, basis, env->action_count(), lspi_for(cfg, *env));
            if (cfg.keep_checkpoint) out.checkpoint = res.policy->to_json();
            policy = res.policy;
        } catch (const NumericalError& err) {
            out.warnings.push_back(std::string("LSPI failed, acting uniformly: ") + err.what());
        }
        out.planning_ms += ms_since(start);
    }
    evaluate(*env, *policy, cfg.eval_episodes, rng, out);
    return out;
}

RunResult run_online(const AgentConfig& cfg, Rng& rng) {
    switch (cfg.kind) {
        case AgentKind::kCtbrl: return ctbrl_online(cfg, rng);
        case AgentKind::kLbrl: return lbrl_online(cfg, rng);
        case AgentKind::kLspiOnline:
        case AgentKind::kLspiOffline: return lspi_online(cfg, rng);
    }
    throw ContractViolation("run_online: unknown agent");
}

RunResult run_offline(const AgentConfig& cfg, int k_rollouts, Rng& rng) {
    switch (cfg.kind) {
        case AgentKind::kCtbrl: return ctbrl_offline(cfg, k_rollouts, rng);
        case AgentKind::kLbrl: return lbrl_offline(cfg, k_rollouts, rng);
        case AgentKind::kLspiOnline:
        case AgentKind::kLspiOffline: return lspi_offline(cfg, k_rollouts, rng);
    }
    throw ContractViolation("run_offline: unknown agent");
}

}  // namespace ctbrl
