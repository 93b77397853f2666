#include "ctbrl/adp.hpp"

#include <algorithm>
#include <cmath>

namespace ctbrl {

namespace {

/// Values within this relative distance of the maximum count as ties.
constexpr double kTieTolerance = 1e-12;

bool is_tie(double v, double best) { return best - v <= kTieTolerance * std::max(1.0, std::abs(best)); }

/// Uniform choice among the maximizers of `values`.
int argmax_uniform(const Vector& values, Rng& rng) {
    const double best = values.maxCoeff();
    int ties = 0;
    for (Eigen::Index a = 0; a < values.size(); ++a) ties += is_tie(values[a], best);
    int pick = ties == 1 ? 0 : std::uniform_int_distribution<int>(0, ties - 1)(rng);
    for (Eigen::Index a = 0; a < values.size(); ++a)
        if (is_tie(values[a], best) && pick-- == 0) return static_cast<int>(a);
    return 0;
}

/// Uniform distribution over the maximizers of row i of `q`.
void tie_distribution(const Matrix& q, Matrix& probs) {
    probs.setZero(q.rows(), q.cols());
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        const double best = q.row(i).maxCoeff();
        int ties = 0;
        for (Eigen::Index a = 0; a < q.cols(); ++a) ties += is_tie(q(i, a), best);
        for (Eigen::Index a = 0; a < q.cols(); ++a)
            if (is_tie(q(i, a), best)) probs(i, a) = 1.0 / ties;
    }
}

Vector solve_regularized(Matrix a, const Vector& b, double ridge, const char* what) {
    a.diagonal().array() += ridge;
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < a.rows()) throw NumericalError(what);
    Vector w = qr.solve(b);
    if (!w.allFinite()) throw NumericalError(what);
    return w;
}

void check_config(const AdpConfig& cfg) {
    require(cfg.n_states > 0 && cfg.api_iterations > 0 && cfg.model_samples > 0,
            "AdpConfig: counts must be positive");
    require(cfg.ridge >= 0.0, "AdpConfig: ridge must be non-negative");
    require(static_cast<bool>(cfg.sampler), "AdpConfig: a state sampler is required");
}

/// Expected value of Vhat at the next state, split into the part linear in
/// the weights (mean features of non-terminal successors) and the reward
/// collected at terminal successors.
struct Successor {
    Vector phi;
    double terminal_reward = 0.0;
};

Successor simulate_successor(const SampledMDP& mdp, const FeatureMap& basis, std::size_t context, const State& s,
                             int a, int k, Rng& rng, Vector& scratch) {
    Successor out;
    out.phi = Vector::Zero(basis.size());
    for (int j = 0; j < k; ++j) {
        const ModelStep st = mdp.step_in(context, s, a, rng);
        if (st.terminal) {
            out.terminal_reward += st.reward;
        } else {
            basis.features(st.next, scratch);
            out.phi += scratch;
        }
    }
    out.phi /= k;
    out.terminal_reward /= k;
    return out;
}

}  // namespace

StateSampler box_sampler(StateBox box) {
    return [box = std::move(box)](Rng& rng) { return box.sample(rng); };
}

double approximate_q(const SampledMDP& mdp, const Vector& omega, const FeatureMap& basis, const State& s, int a,
                     int model_samples, Rng& rng) {
    require(model_samples > 0, "approximate_q: need at least one model sample");
    require(omega.size() == basis.size(), "approximate_q: weight and basis size differ");
    Vector scratch(basis.size());
    const auto succ = simulate_successor(mdp, basis, mdp.context_index(s, a), s, a, model_samples, rng, scratch);
    return mdp.reward_model().state_reward(s) + mdp.discount() * (succ.phi.dot(omega) + succ.terminal_reward);
}

Vector lstd_evaluate(const SampledMDP& mdp, const Policy& policy, const FeatureMap& basis, const AdpConfig& cfg,
                     Rng& rng) {
    check_config(cfg);
    const int m = basis.size();
    const double gamma = mdp.discount();
    Matrix a_mat = Matrix::Zero(m, m);
    Vector b = Vector::Zero(m);
    Vector phi(m), scratch(m);
    for (int i = 0; i < cfg.n_states; ++i) {
        const State s = cfg.sampler(rng);
        basis.features(s, phi);
        Vector next_phi = Vector::Zero(m);
        double next_reward = 0.0;
        for (int j = 0; j < cfg.model_samples; ++j) {
            const int act = policy.act(s, rng);
            const auto succ = simulate_successor(mdp, basis, mdp.context_index(s, act), s, act, 1, rng, scratch);
            next_phi += succ.phi;
            next_reward += succ.terminal_reward;
        }
        next_phi /= cfg.model_samples;
        next_reward /= cfg.model_samples;
        a_mat.noalias() += phi * (phi - gamma * next_phi).transpose();
        b += phi * (mdp.reward_model().state_reward(s) + gamma * next_reward);
    }
    return solve_regularized(std::move(a_mat), b, cfg.ridge, "lstd_evaluate: singular LSTD system");
}

GreedyValuePolicy::GreedyValuePolicy(std::shared_ptr<const SampledMDP> mdp, FeatureMapPtr basis, Vector omega,
                                     int model_samples)
    : mdp_(std::move(mdp)), basis_(std::move(basis)), omega_(std::move(omega)), model_samples_(model_samples) {
    require(mdp_ && basis_, "GreedyValuePolicy: model and basis are required");
    require(omega_.size() == basis_->size(), "GreedyValuePolicy: weight and basis size differ");
    require(model_samples_ > 0, "GreedyValuePolicy: need at least one model sample");
}

int GreedyValuePolicy::act(const State& s, Rng& rng) const {
    // Common random numbers: every action sees the same noise draws, so the
    // comparison is not swamped by independent Monte-Carlo error.
    const std::uint64_t stream = rng();
    Vector q(mdp_->action_count());
    for (int a = 0; a < mdp_->action_count(); ++a) {
        Rng shared(stream);
        q[a] = approximate_q(*mdp_, omega_, *basis_, s, a, model_samples_, shared);
    }
    return argmax_uniform(q, rng);
}

nlohmann::json GreedyValuePolicy::to_json() const {
    return {{"type", "greedy_value"},
            {"basis", basis_->descriptor()},
            {"omega", std::vector<double>(omega_.data(), omega_.data() + omega_.size())},
            {"model_samples", model_samples_}};
}

ApiResult approximate_policy_iteration(std::shared_ptr<const SampledMDP> mdp, FeatureMapPtr basis,
                                       const AdpConfig& cfg, Rng& rng, const Vector* warm_start) {
    check_config(cfg);
    require(mdp && basis, "approximate_policy_iteration: model and basis are required");
    const int m = basis->size();
    const int n = cfg.n_states;
    const int actions = mdp->action_count();
    const double gamma = mdp->discount();

    // Simulate once: features and reward of each state, expected successor
    // terms for each action.
    Matrix phi(m, n);
    Vector reward(n);
    std::vector<Matrix> succ_phi(static_cast<std::size_t>(actions), Matrix(m, n));
    Matrix succ_reward(n, actions);
    Vector scratch(m);
    for (int i = 0; i < n; ++i) {
        const State s = cfg.sampler(rng);
        basis->features(s, scratch);
        phi.col(i) = scratch;
        reward[i] = mdp->reward_model().state_reward(s);
        const std::uint64_t stream = rng();  // common random numbers across actions
        for (int a = 0; a < actions; ++a) {
            Rng shared(stream);
            const auto succ =
                simulate_successor(*mdp, *basis, mdp->context_index(s, a), s, a, cfg.model_samples, shared, scratch);
            succ_phi[static_cast<std::size_t>(a)].col(i) = succ.phi;
            succ_reward(i, a) = succ.terminal_reward;
        }
    }

    Matrix probs = Matrix::Constant(n, actions, 1.0 / actions);
    auto greedy = [&](const Vector& w) {
        Matrix q(n, actions);
        for (int a = 0; a < actions; ++a)
            q.col(a) = reward + gamma * (succ_phi[static_cast<std::size_t>(a)].transpose() * w + succ_reward.col(a));
        Matrix p;
        tie_distribution(q, p);
        return p;
    };
    if (warm_start) {
        require(warm_start->size() == m, "approximate_policy_iteration: warm start has the wrong size");
        probs = greedy(*warm_start);
    }

    ApiResult out;
    Matrix expected_phi(m, n);
    for (int it = 0; it < cfg.api_iterations; ++it) {
        expected_phi.setZero();
        Vector target = reward;
        for (int a = 0; a < actions; ++a) {
            expected_phi += succ_phi[static_cast<std::size_t>(a)] * probs.col(a).asDiagonal();
            target += gamma * probs.col(a).cwiseProduct(succ_reward.col(a));
        }
        const Matrix a_mat = phi * (phi - gamma * expected_phi).transpose();
        out.omega = solve_regularized(a_mat, phi * target, cfg.ridge,
                                      "approximate_policy_iteration: singular LSTD system");
        out.iterations = it + 1;
        Matrix next = greedy(out.omega);
        if (next == probs) {
            out.converged = true;
            break;
        }
        probs = std::move(next);
    }
    out.policy = std::make_shared<GreedyValuePolicy>(std::move(mdp), std::move(basis), out.omega, cfg.model_samples);
    return out;
}

// ------------------------------------------------------------------- LSPI

void LspiSamples::add(const Transition& t, const FeatureMap& basis) {
    phi.push_back(basis(t.s));
    phi_next.push_back(basis(t.s_next));
    action.push_back(t.a);
    reward.push_back(t.r);
    terminal.push_back(t.terminal ? 1 : 0);
}

LinearQPolicy::LinearQPolicy(FeatureMapPtr basis, Matrix weights)
    : basis_(std::move(basis)), weights_(std::move(weights)) {
    require(basis_ != nullptr, "LinearQPolicy: basis is required");
    require(weights_.rows() == basis_->size() && weights_.cols() > 0, "LinearQPolicy: weights must be m x |A|");
}

int LinearQPolicy::act(const State& s, Rng& rng) const {
    const Vector q = weights_.transpose() * (*basis_)(s);
    return argmax_uniform(q, rng);
}

nlohmann::json LinearQPolicy::to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (Eigen::Index a = 0; a < weights_.cols(); ++a)
        cols.push_back(std::vector<double>(weights_.col(a).data(), weights_.col(a).data() + weights_.rows()));
    return {{"type", "linear_q"}, {"basis", basis_->descriptor()}, {"weights", cols}};
}

LspiResult lstdq_lspi(const LspiSamples& data, FeatureMapPtr basis, int action_count, const LspiConfig& cfg,
                      const Matrix* warm_start) {
    require(data.size() > 0, "lstdq_lspi: no data");
    require(basis != nullptr && action_count > 0, "lstdq_lspi: basis and actions are required");
    require(cfg.iterations > 0 && cfg.ridge >= 0.0, "lstdq_lspi: invalid configuration");
    const int m = basis->size();
    const int dim = m * action_count;

    Matrix w = Matrix::Zero(m, action_count);
    if (warm_start) {
        require(warm_start->rows() == m && warm_start->cols() == action_count, "lstdq_lspi: warm start shape");
        w = *warm_start;
    }

    LspiResult out;
    Vector q_next(action_count);
    for (int it = 0; it < cfg.iterations; ++it) {
        Matrix a_mat = Matrix::Zero(dim, dim);
        Vector b = Vector::Zero(dim);
        for (std::size_t t = 0; t < data.size(); ++t) {
            const int a = data.action[t];
            require(a >= 0 && a < action_count, "lstdq_lspi: action out of range");
            const Vector& f = data.phi[t];
            a_mat.block(a * m, a * m, m, m).noalias() += f * f.transpose();
            b.segment(a * m, m) += data.reward[t] * f;
            if (data.terminal[t]) continue;
            const Vector& g = data.phi_next[t];
            q_next.noalias() = w.transpose() * g;
            const double best = q_next.maxCoeff();
            int ties = 0;
            for (int c = 0; c < action_count; ++c) ties += is_tie(q_next[c], best);
            const Matrix outer = (cfg.discount / ties) * (f * g.transpose());
            for (int c = 0; c < action_count; ++c)
                if (is_tie(q_next[c], best)) a_mat.block(a * m, c * m, m, m) -= outer;
        }
        const Vector flat = solve_regularized(std::move(a_mat), b, cfg.ridge, "lstdq_lspi: singular LSTDQ system");
        const Matrix next = Eigen::Map<const Matrix>(flat.data(), m, action_count);
        const double change = (next - w).norm();
        w = next;
        out.iterations = it + 1;
        if (change < cfg.tolerance) {
            out.converged = true;
            break;
        }
    }
    out.weights = w;
    out.policy = std::make_shared<LinearQPolicy>(std::move(basis), w);
    return out;
}

LspiResult lstdq_lspi(const std::vector<Transition>& data, FeatureMapPtr basis, int action_count,
                      const LspiConfig& cfg, const Matrix* warm_start) {
    require(basis != nullptr, "lstdq_lspi: basis is required");
    LspiSamples samples;
    for (const auto& t : data) samples.add(t, *basis);
    return lstdq_lspi(samples, std::move(basis), action_count, cfg, warm_start);
}

}  // namespace ctbrl
