#include "ctbrl/context_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctbrl/sampled_mdp.hpp"

namespace ctbrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

}  // namespace

ContextTreeConfig ContextTreeConfig::for_state_dim(int state_dim, double w0) {
    ContextTreeConfig cfg;
    cfg.prior = MniwPrior::standard(state_dim + 1, state_dim, w0);
    return cfg;
}

PathUpdate path_weight_update(std::span<const double> weights, std::span<const double> log_densities) {
    require(!weights.empty() && weights.size() == log_densities.size(),
            "path_weight_update: weights and densities must be non-empty and equally long");
    require(weights[0] == 1.0, "path_weight_update: the root weight must be 1");

    const std::size_t n = weights.size();
    std::vector<double> log_u(n);
    log_u[0] = log_densities[0];
    for (std::size_t k = 1; k < n; ++k) {
        const double w = weights[k];
        require(w >= 0.0 && w <= 1.0, "path_weight_update: weights must lie in [0, 1]");
        log_u[k] = log_add(safe_log(w) + log_densities[k], safe_log(1.0 - w) + log_u[k - 1]);
    }

    PathUpdate out;
    out.log_marginal = log_u[n - 1];
    if (!std::isfinite(out.log_marginal))
        throw NumericalError("path_weight_update: marginal density is zero or not finite");
    out.weights.resize(n);
    out.weights[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        const double w = weights[k];
        out.weights[k] = w > 0.0 ? std::clamp(std::exp(std::log(w) + log_densities[k] - log_u[k]), 0.0, 1.0) : 0.0;
    }
    return out;
}

ContextTree::ContextTree(ContextTreeConfig config)
    : config_(std::move(config)), cover_(config_.prior.output_dim(), config_.cover) {
    require(config_.prior.input_dim() == config_.prior.output_dim() + 1,
            "ContextTree: prior must map the augmented state to the next state");
}

bool ContextTree::in_scope(NodeId id) const {
    return config_.max_depth < 0 || cover_.depth(id) <= static_cast<std::uint32_t>(config_.max_depth);
}

void ContextTree::set_weight(NodeId id, double w) {
    require(id < size(), "ContextTree::set_weight: unknown node");
    require(w >= 0.0 && w <= 1.0, "ContextTree::set_weight: weight must lie in [0, 1]");
    require(id != cover_.root() || w == 1.0, "ContextTree::set_weight: the root weight is fixed at 1");
    nodes_[id].weight = w;
}

NodePath ContextTree::context_path(const State& s) const {
    NodePath path = cover_.containing_path(s);
    while (path.size() > 1 && !in_scope(path.back())) path.pop_back();
    return path;
}

std::vector<StopProbability> ContextTree::stopping_distribution(const State& s) const {
    const NodePath path = context_path(s);
    std::vector<StopProbability> out;
    double survive = 1.0;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const double w = nodes_[*it].weight;
        out.push_back({*it, w * survive});
        survive *= 1.0 - w;
    }
    return out;
}

PathUpdate ContextTree::evaluate(const NodePath& path, const std::vector<const MniwPosterior*>& models,
                                 const std::vector<double>& weights, const AugmentedInput& x,
                                 const Vector& y) const {
    std::vector<double> log_dens(path.size());
    for (std::size_t k = 0; k < path.size(); ++k)
        log_dens[k] = models[k]->log_predictive_density(x, y, config_.form);
    return path_weight_update(weights, log_dens);
}

double ContextTree::log_marginal_predictive(const State& s, const State& s_next) const {
    const NodePath path = context_path(s);
    std::vector<const MniwPosterior*> models;
    std::vector<double> weights;
    for (NodeId id : path) {
        models.push_back(&nodes_[id].model);
        weights.push_back(nodes_[id].weight);
    }
    return evaluate(path, models, weights, AugmentedInput::from_state(s), s_next).log_marginal;
}

double ContextTree::marginal_predictive(const State& s, const State& s_next) const {
    return std::exp(log_marginal_predictive(s, s_next));
}

Vector ContextTree::marginal_mean(const State& s) const {
    const auto x = AugmentedInput::from_state(s);
    Vector mean = Vector::Zero(state_dim());
    for (const auto& [id, p] : stopping_distribution(s)) mean += p * nodes_[id].model.predictive_mean(x);
    return mean;
}

double ContextTree::observe(const State& s, const State& s_next) {
    require(s.size() == state_dim() && s_next.size() == state_dim(), "ContextTree::observe: state dimension mismatch");
    const auto x = AugmentedInput::from_state(s);
    const InsertPlan plan = cover_.plan_insert(as_span(s));

    const auto new_id = static_cast<NodeId>(size());
    const double new_weight = plan.depth == 0 ? 1.0 : std::ldexp(1.0, -static_cast<int>(plan.depth));
    const MniwPosterior fresh(config_.prior);
    const bool new_in_scope = config_.max_depth < 0 || plan.depth <= static_cast<std::uint32_t>(config_.max_depth);

    NodePath path;
    if (plan.parent != kNoNode)
        for (NodeId id : cover_.lineage(plan.parent))
            if (in_scope(id)) path.push_back(id);
    if (new_in_scope) path.push_back(new_id);

    std::vector<const MniwPosterior*> models;
    std::vector<double> weights;
    for (NodeId id : path) {
        models.push_back(id == new_id ? &fresh : &nodes_[id].model);
        weights.push_back(id == new_id ? new_weight : nodes_[id].weight);
    }
    const PathUpdate upd = evaluate(path, models, weights, x, s_next);

    // Every fallible step happens before the first write.
    std::vector<MniwPosterior> updated;
    updated.reserve(path.size());
    for (const auto* m : models) updated.push_back(posterior_update(*m, x, s_next));

    cover_.commit(plan, as_span(s));
    nodes_.push_back({new_weight, fresh});
    for (std::size_t k = 0; k < path.size(); ++k) {
        nodes_[path[k]].weight = upd.weights[k];
        nodes_[path[k]].model = std::move(updated[k]);
    }
    return upd.log_marginal;
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) return Matrix(0, 0);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == rows[0].size(), "matrix_from_json: ragged rows");
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
    return m;
}

nlohmann::json prior_to_json(const MniwPrior& p) {
    return {{"mean", matrix_to_json(p.mean)},
            {"precision", matrix_to_json(p.precision)},
            {"scale", matrix_to_json(p.scale)},
            {"dof", p.dof}};
}

MniwPrior prior_from_json(const nlohmann::json& j) {
    MniwPrior p;
    p.mean = matrix_from_json(j.at("mean"));
    p.precision = matrix_from_json(j.at("precision"));
    p.scale = matrix_from_json(j.at("scale"));
    p.dof = j.at("dof").get<double>();
    return p;
}

nlohmann::json ContextTree::to_json() const {
    nlohmann::json contexts = nlohmann::json::array();
    for (const auto& n : nodes_) {
        contexts.push_back({{"w", n.weight},
                            {"mean", matrix_to_json(n.model.mean_matrix())},
                            {"precision", matrix_to_json(n.model.input_precision())},
                            {"scale", matrix_to_json(n.model.wishart_scale())},
                            {"dof", n.model.dof()},
                            {"count", n.model.obs_count()}});
    }
    return {{"prior", prior_to_json(config_.prior)},
            {"max_depth", config_.max_depth},
            {"student_form", config_.form == StudentForm::kConjugate ? "conjugate" : "unscaled"},
            {"cover", cover_.to_json()},
            {"contexts", std::move(contexts)}};
}

ContextTree ContextTree::from_json(const nlohmann::json& j) {
    ContextTreeConfig cfg;
    cfg.prior = prior_from_json(j.at("prior"));
    cfg.max_depth = j.at("max_depth").get<int>();
    cfg.form = j.at("student_form").get<std::string>() == "unscaled" ? StudentForm::kUnscaled : StudentForm::kConjugate;
    CoverTree cover = CoverTree::from_json(j.at("cover"));
    cfg.cover = cover.config();
    ContextTree tree(cfg);
    tree.cover_ = std::move(cover);
    for (const auto& c : j.at("contexts")) {
        tree.nodes_.push_back({c.at("w").get<double>(),
                               MniwPosterior(matrix_from_json(c.at("mean")), matrix_from_json(c.at("precision")),
                                             matrix_from_json(c.at("scale")), c.at("dof").get<double>(),
                                             c.at("count").get<std::uint64_t>())});
    }
    require(tree.nodes_.size() == tree.cover_.size(), "ContextTree::from_json: one context per cover node required");
    return tree;
}

GeneralizedContextTree::GeneralizedContextTree(int action_count, ContextTreeConfig config)
    : state_dim_(config.prior.output_dim()) {
    require(action_count > 0, "GeneralizedContextTree: need at least one action");
    trees_.reserve(static_cast<std::size_t>(action_count));
    for (int a = 0; a < action_count; ++a) trees_.emplace_back(config);
}

const ContextTree& GeneralizedContextTree::tree(int action) const {
    require(action >= 0 && action < action_count(), "GeneralizedContextTree: action out of range");
    return trees_[static_cast<std::size_t>(action)];
}

ContextTree& GeneralizedContextTree::tree_mut(int action) {
    require(action >= 0 && action < action_count(), "GeneralizedContextTree: action out of range");
    return trees_[static_cast<std::size_t>(action)];
}

double GeneralizedContextTree::observe(const State& s, int action, const State& s_next) {
    const double lp = tree_mut(action).observe(s, s_next);
    ++time_;
    return lp;
}

double GeneralizedContextTree::marginal_predictive(const State& s, int action, const State& s_next) const {
    return tree(action).marginal_predictive(s, s_next);
}

SampledMDP GeneralizedContextTree::sample_mdp(const RewardModel& reward, double discount, Rng& rng) const {
    std::vector<SampledMDP::ActionModel> models;
    for (const auto& t : trees_) {
        SampledMDP::ActionModel m;
        m.max_depth = t.config().max_depth;
        if (t.empty()) {
            m.samples.push_back(MniwPosterior(t.config().prior).sample(rng));
            m.context_node.push_back(0);
            models.push_back(std::move(m));
            continue;
        }
        m.tree = std::make_shared<const CoverTree>(t.cover());
        m.slot.assign(t.size(), -1);
        const auto cap = t.config().max_depth;
        for (NodeId id = 0; id < t.size(); ++id) {
            if (cap >= 0 && t.cover().depth(id) > static_cast<std::uint32_t>(cap)) continue;
            bool keep = id == t.cover().root();
            if (!keep) keep = std::bernoulli_distribution(t.node(id).weight)(rng);
            if (!keep) continue;
            m.slot[id] = static_cast<std::int32_t>(m.samples.size());
            m.context_node.push_back(id);
            m.samples.push_back(t.node(id).model.sample(rng));
        }
        models.push_back(std::move(m));
    }
    return SampledMDP(state_dim_, std::move(models), reward, discount);
}

nlohmann::json GeneralizedContextTree::to_json() const {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& t : trees_) actions.push_back(t.to_json());
    return {{"format", "ctbrl-context-tree/1"}, {"time", time_}, {"actions", std::move(actions)}};
}

GeneralizedContextTree GeneralizedContextTree::from_json(const nlohmann::json& j) {
    require(j.at("format").get<std::string>() == "ctbrl-context-tree/1",
            "GeneralizedContextTree::from_json: unknown format");
    const auto& acts = j.at("actions");
    require(!acts.empty(), "GeneralizedContextTree::from_json: no action trees");
    std::vector<ContextTree> trees;
    for (const auto& a : acts) trees.push_back(ContextTree::from_json(a));
    GeneralizedContextTree g(static_cast<int>(trees.size()), trees.front().config());
    g.trees_ = std::move(trees);
    g.time_ = j.at("time").get<std::uint64_t>();
    return g;
}

}  // namespace ctbrl
