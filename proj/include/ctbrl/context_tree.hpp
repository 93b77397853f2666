#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctbrl/bayes_linear.hpp"
#include "ctbrl/cover_tree.hpp"

namespace ctbrl {

/// Settings shared by every action tree.
struct ContextTreeConfig {
    MniwPrior prior;
    CoverTreeConfig cover;
    /// Contexts deeper than this never take part in inference or sampling.
    /// 0 keeps only the root (one global linear model); negative: no cap.
    int max_depth = -1;
    StudentForm form = StudentForm::kConjugate;

    /// Standard prior for a `state_dim`-dimensional state that predicts the
    /// next state from the augmented input.
    static ContextTreeConfig for_state_dim(int state_dim, double w0 = 1.0);
};

struct ContextNode {
    double weight;  // stopping probability, in [0, 1]
    MniwPosterior model;
};

struct StopProbability {
    NodeId node;
    double probability;
};

/// Result of one Bayes step along a root-first path.
struct PathUpdate {
    std::vector<double> weights;  // posterior stopping weights, root first
    double log_marginal;          // log p(s' | s) under the prior weights
};

/// The closed-form update along a path, separated from the tree so that it
/// can be checked against hand arithmetic.
///
/// The walk starts at the deepest node and moves towards the root, stopping
/// at node i with probability w_i. Writing U_i for the predictive density
/// given that the walk reached i,
///     U_root = p_root,   U_i = w_i p_i + (1 - w_i) U_parent(i),
/// the marginal is U at the deepest node and each weight becomes
/// w_i p_i / U_i. The root weight must be 1. Everything runs in log space.
PathUpdate path_weight_update(std::span<const double> weights, std::span<const double> log_densities);

/// Context tree over one action's cover tree. Each cover node carries a
/// stopping weight and an MNIW model of s' given the augmented s.
///
/// Single writer; concurrent reads are safe between writes.
class ContextTree {
public:
    explicit ContextTree(ContextTreeConfig config);

    const ContextTreeConfig& config() const { return config_; }
    const CoverTree& cover() const { return cover_; }
    bool empty() const { return cover_.empty(); }
    std::size_t size() const { return cover_.size(); }
    int state_dim() const { return cover_.dim(); }

    const ContextNode& node(NodeId id) const { return nodes_[id]; }
    /// Test and checkpoint hook. The root weight cannot be changed from 1.
    void set_weight(NodeId id, double w);

    /// containing_path(s) cut at the depth cap.
    NodePath context_path(const State& s) const;

    /// (node, probability) over context_path(s), deepest node first.
    std::vector<StopProbability> stopping_distribution(const State& s) const;

    double log_marginal_predictive(const State& s, const State& s_next) const;
    double marginal_predictive(const State& s, const State& s_next) const;
    /// Mixture mean of s' under the stopping distribution.
    Vector marginal_mean(const State& s) const;

    /// Adds s as a new leaf (weight 2^{-depth}, prior model), then applies the
    /// weight update and the conjugate model update to every context on its
    /// path. Nothing is written if any node update fails. Returns
    /// log p(s' | s) under the pre-update posterior, with the new leaf in
    /// the mixture at its prior.
    double observe(const State& s, const State& s_next);

    /// Includes the config (prior, zoom, depth cap, Student form).
    nlohmann::json to_json() const;
    static ContextTree from_json(const nlohmann::json& j);

private:
    bool in_scope(NodeId id) const;
    PathUpdate evaluate(const NodePath& path, const std::vector<const MniwPosterior*>& models,
                        const std::vector<double>& weights, const AugmentedInput& x,
                        const Vector& y) const;

    ContextTreeConfig config_;
    CoverTree cover_;
    std::vector<ContextNode> nodes_;
};

class SampledMDP;
struct RewardModel;

/// One context tree per action plus a global observation counter.
class GeneralizedContextTree {
public:
    GeneralizedContextTree(int action_count, ContextTreeConfig config);

    int action_count() const { return static_cast<int>(trees_.size()); }
    int state_dim() const { return state_dim_; }
    std::uint64_t time() const { return time_; }
    const ContextTree& tree(int action) const;
    ContextTree& tree_mut(int action);

    double observe(const State& s, int action, const State& s_next);
    double marginal_predictive(const State& s, int action, const State& s_next) const;

    /// Thompson draw: every non-root context within the depth cap is kept
    /// with probability equal to its weight, the root always; parameters are
    /// sampled for kept contexts only. An empty action tree contributes a
    /// single prior draw.
    SampledMDP sample_mdp(const RewardModel& reward, double discount, Rng& rng) const;

    nlohmann::json to_json() const;
    static GeneralizedContextTree from_json(const nlohmann::json& j);

private:
    int state_dim_;
    std::vector<ContextTree> trees_;
    std::uint64_t time_ = 0;
};

nlohmann::json prior_to_json(const MniwPrior& p);
MniwPrior prior_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace ctbrl
