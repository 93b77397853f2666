#include "ctbrl/sampled_mdp.hpp"

namespace ctbrl {

SampledMDP::SampledMDP(int state_dim, std::vector<ActionModel> actions, RewardModel reward, double discount)
    : state_dim_(state_dim), actions_(std::move(actions)), reward_(std::move(reward)), discount_(discount) {
    require(!actions_.empty(), "SampledMDP: need at least one action");
    require(static_cast<bool>(reward_.state_reward) && static_cast<bool>(reward_.terminal),
            "SampledMDP: reward model is incomplete");
    require(discount_ >= 0.0 && discount_ < 1.0, "SampledMDP: discount must lie in [0, 1)");
    for (const auto& m : actions_) {
        require(!m.samples.empty(), "SampledMDP: every action needs at least one context");
        require(m.samples.size() == m.context_node.size(), "SampledMDP: context bookkeeping mismatch");
        for (const auto& smp : m.samples)
            require(smp.design.rows() == state_dim_ && smp.design.cols() == state_dim_ + 1,
                    "SampledMDP: design matrix shape mismatch");
        if (m.tree) {
            require(m.slot.size() == m.tree->size(), "SampledMDP: slot table does not match the tree");
            require(m.slot[m.tree->root()] >= 0, "SampledMDP: the root context must be selected");
        }
    }
}

SampledMDP SampledMDP::from_linear_models(std::vector<LinearGaussianSample> per_action, RewardModel reward,
                                        double discount) {
    require(!per_action.empty(), "SampledMDP::from_linear_models: need at least one action");
    const int dim = static_cast<int>(per_action.front().design.rows());
    std::vector<ActionModel> actions;
    for (auto& s : per_action) {
        ActionModel m;
        m.samples.push_back(std::move(s));
        m.context_node.push_back(0);
        actions.push_back(std::move(m));
    }
    return SampledMDP(dim, std::move(actions), std::move(reward), discount);
}

std::size_t SampledMDP::context_index(const State& s, int a) const {
    require(a >= 0 && a < action_count(), "SampledMDP: action out of range");
    require(s.size() == state_dim_, "SampledMDP: state dimension mismatch");
    const auto& m = actions_[static_cast<std::size_t>(a)];
    if (!m.tree) return 0;
    const NodePath path = m.tree->containing_path(s);
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        if (m.max_depth >= 0 && m.tree->depth(*it) > static_cast<std::uint32_t>(m.max_depth)) continue;
        if (m.slot[*it] >= 0) return static_cast<std::size_t>(m.slot[*it]);
    }
    return static_cast<std::size_t>(m.slot[path.front()]);
}

NodeId SampledMDP::context_node(const State& s, int a) const {
    return actions_[static_cast<std::size_t>(a)].context_node[context_index(s, a)];
}

const LinearGaussianSample& SampledMDP::context(const State& s, int a) const {
    return actions_[static_cast<std::size_t>(a)].samples[context_index(s, a)];
}

Vector SampledMDP::predict_mean_in(std::size_t ctx, const State& s, int a) const {
    const auto& smp = actions_[static_cast<std::size_t>(a)].samples[ctx];
    return smp.design * AugmentedInput::from_state(s).vector();
}

Vector SampledMDP::predict_mean(const State& s, int a) const { return predict_mean_in(context_index(s, a), s, a); }

ModelStep SampledMDP::step_in(std::size_t ctx, const State& s, int a, Rng& rng) const {
    const auto& smp = actions_[static_cast<std::size_t>(a)].samples[ctx];
    std::normal_distribution<double> normal;
    Vector white(state_dim_);
    for (int i = 0; i < state_dim_; ++i) white[i] = normal(rng);
    ModelStep out;
    out.next = predict_mean_in(ctx, s, a) + smp.noise_factor * white;
    out.reward = reward_.state_reward(out.next);
    out.terminal = reward_.terminal(out.next);
    return out;
}

ModelStep SampledMDP::step(const State& s, int a, Rng& rng) const { return step_in(context_index(s, a), s, a, rng); }

SampledMDP SampledMDP::without_noise() const {
    SampledMDP copy = *this;
    for (auto& m : copy.actions_)
        for (auto& smp : m.samples) {
            smp.covariance.setZero();
            smp.noise_factor.setZero();
        }
    return copy;
}

}  // namespace ctbrl
