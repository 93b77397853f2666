#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ctbrl/bayes_linear.hpp"
#include "ctbrl/cover_tree.hpp"

namespace ctbrl {

/// The known part of the environment: the reward rho(s) collected on
/// entering s, and which states end an episode.
struct RewardModel {
    std::function<double(const State&)> state_reward;
    std::function<bool(const State&)> terminal;
};

struct ModelStep {
    State next;
    double reward;
    bool terminal;
};

/// A concrete piecewise-linear Gaussian MDP drawn from the posterior.
///
/// For each action it holds a frozen copy of that action's cover tree and
/// the parameter draws of the selected contexts. f(s, a) is the deepest
/// selected context on the containing path of s in the tree of a; the root
/// is always selected, so f is total. Immutable after construction and safe
/// for any number of concurrent readers.
class SampledMDP {
public:
    struct ActionModel {
        std::shared_ptr<const CoverTree> tree;      // null: one global context
        std::vector<std::int32_t> slot;             // node -> index into samples, -1 if not selected
        std::vector<NodeId> context_node;           // index -> node
        std::vector<LinearGaussianSample> samples;
        int max_depth = -1;
    };

    SampledMDP(int state_dim, std::vector<ActionModel> actions, RewardModel reward, double discount);

    /// One global linear model per action (no tree).
    static SampledMDP from_linear_models(std::vector<LinearGaussianSample> per_action, RewardModel reward,
                                         double discount);

    int state_dim() const { return state_dim_; }
    int action_count() const { return static_cast<int>(actions_.size()); }
    double discount() const { return discount_; }
    const RewardModel& reward_model() const { return reward_; }
    const ActionModel& action_model(int a) const { return actions_[static_cast<std::size_t>(a)]; }

    /// Index of f(s, a) within action_model(a).samples.
    std::size_t context_index(const State& s, int a) const;
    /// Cover node of f(s, a) (0 for a tree-less model).
    NodeId context_node(const State& s, int a) const;
    const LinearGaussianSample& context(const State& s, int a) const;

    Vector predict_mean(const State& s, int a) const;
    Vector predict_mean_in(std::size_t context, const State& s, int a) const;

    /// s' ~ Normal(A x, V) in the context of (s, a); reward is rho(s').
    ModelStep step(const State& s, int a, Rng& rng) const;
    /// Same draw with the context already resolved.
    ModelStep step_in(std::size_t context, const State& s, int a, Rng& rng) const;

    /// Copy with every V (and its factor) replaced by zero.
    SampledMDP without_noise() const;

private:
    int state_dim_;
    std::vector<ActionModel> actions_;
    RewardModel reward_;
    double discount_;
};

inline ModelStep mdp_step(const SampledMDP& mdp, const State& s, int a, Rng& rng) { return mdp.step(s, a, rng); }

}  // namespace ctbrl
