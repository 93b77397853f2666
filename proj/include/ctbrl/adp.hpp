#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctbrl/environments.hpp"
#include "ctbrl/features.hpp"
#include "ctbrl/policy.hpp"
#include "ctbrl/sampled_mdp.hpp"

namespace ctbrl {

using StateSampler = std::function<State(Rng&)>;

/// Uniform sampler over a box.
StateSampler box_sampler(StateBox box);

struct AdpConfig {
    int n_states = 3000;       // states drawn per API call
    int api_iterations = 25;   // evaluation / improvement rounds
    int model_samples = 1;     // next-state draws per (state, action)
    double ridge = 1e-6;       // lambda in (A + lambda I) w = b
    StateSampler sampler;      // the measure states are drawn from
};

/// Values are v(s) ~ phi(s)^T w and follow
///     V(s) = rho(s) + gamma E[ Vhat(s') ],   Vhat(s') = rho(s') if s' is terminal, else v(s'),
/// so q(s, a) = rho(s) + gamma mean_j Vhat(s'_j) with s'_j drawn from the model at (s, a).
double approximate_q(const SampledMDP& mdp, const Vector& omega, const FeatureMap& basis, const State& s, int a,
                     int model_samples, Rng& rng);

/// LSTD evaluation of an arbitrary policy on model data: n_states states
/// from the sampler, model_samples policy-chosen transitions from each.
/// Throws NumericalError if the regularized system is singular.
Vector lstd_evaluate(const SampledMDP& mdp, const Policy& policy, const FeatureMap& basis, const AdpConfig& cfg,
                     Rng& rng);

/// Acts greedily with respect to q over a fixed model, value weights and
/// basis; each call draws fresh model samples and breaks ties uniformly.
class GreedyValuePolicy final : public Policy {
public:
    GreedyValuePolicy(std::shared_ptr<const SampledMDP> mdp, FeatureMapPtr basis, Vector omega, int model_samples);
    int act(const State& s, Rng& rng) const override;

    const Vector& omega() const { return omega_; }
    const SampledMDP& mdp() const { return *mdp_; }
    nlohmann::json to_json() const;

private:
    std::shared_ptr<const SampledMDP> mdp_;
    FeatureMapPtr basis_;
    Vector omega_;
    int model_samples_;
};

struct ApiResult {
    Vector omega;
    std::shared_ptr<const GreedyValuePolicy> policy;
    int iterations = 0;       // evaluations performed
    bool converged = false;   // stopped at a policy fixed point
};

/// Approximate policy iteration on a sampled model.
///
/// One batch of states and next states is simulated up front and reused by
/// every round. Improvement is greedy in q with ties split uniformly, so a
/// policy is a distribution over each state's tie set. Starts from the
/// uniform policy, or from the greedy policy of `warm_start` if given, and
/// stops after api_iterations evaluations or at a fixed point.
ApiResult approximate_policy_iteration(std::shared_ptr<const SampledMDP> mdp, FeatureMapPtr basis,
                                       const AdpConfig& cfg, Rng& rng, const Vector* warm_start = nullptr);

// ------------------------------------------------------------------- LSPI

struct LspiConfig {
    int iterations = 25;
    double ridge = 1e-6;
    double discount = 0.95;
    double tolerance = 1e-6;  // stop once |w_new - w| < tolerance
};

/// Transitions with their features computed once.
struct LspiSamples {
    std::vector<Vector> phi;
    std::vector<Vector> phi_next;
    std::vector<int> action;
    std::vector<double> reward;
    std::vector<char> terminal;

    void add(const Transition& t, const FeatureMap& basis);
    std::size_t size() const { return action.size(); }
};

/// Greedy in Q(s, a) = phi(s)^T W.col(a); ties split uniformly.
class LinearQPolicy final : public Policy {
public:
    LinearQPolicy(FeatureMapPtr basis, Matrix weights);
    int act(const State& s, Rng& rng) const override;
    const Matrix& weights() const { return weights_; }
    nlohmann::json to_json() const;

private:
    FeatureMapPtr basis_;
    Matrix weights_;  // m x |A|
};

struct LspiResult {
    Matrix weights;
    std::shared_ptr<const LinearQPolicy> policy;
    int iterations = 0;
    bool converged = false;
};

/// LSPI with LSTDQ on the action-replicated basis psi(s, a) = e_a (x) phi(s).
/// Terminal transitions bootstrap nothing. Starts from W = 0 (or `warm_start`).
LspiResult lstdq_lspi(const LspiSamples& data, FeatureMapPtr basis, int action_count, const LspiConfig& cfg,
                      const Matrix* warm_start = nullptr);
LspiResult lstdq_lspi(const std::vector<Transition>& data, FeatureMapPtr basis, int action_count,
                      const LspiConfig& cfg, const Matrix* warm_start = nullptr);

}  // namespace ctbrl
