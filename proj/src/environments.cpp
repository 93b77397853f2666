#include "ctbrl/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctbrl {

State StateBox::sample(Rng& rng) const {
    State s(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) s[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
    return s;
}

RewardModel Environment::reward_model() const {
    std::shared_ptr<const Environment> self = clone();
    return {[self](const State& s) { return self->state_reward(s); },
            [self](const State& s) { return self->is_terminal(s); }};
}

void Environment::check_action(int a) const {
    require(a >= 0 && a < action_count(), "Environment: action index out of range");
}

// ---------------------------------------------------------------- mountain car

State MountainCar::sample_start(Rng& rng) const {
    State s(2);
    s[0] = std::uniform_real_distribution<double>(kMinPosition, kMaxPosition)(rng);
    s[1] = std::uniform_real_distribution<double>(-kMaxSpeed, kMaxSpeed)(rng);
    return s;
}

Transition MountainCar::step(const State& s, int a, Rng&) const {
    check_action(a);
    require(s.size() == 2, "MountainCar: state must be (position, velocity)");
    const double u = static_cast<double>(a - 1);
    double v = std::clamp(s[1] + 0.001 * u - 0.0025 * std::cos(3.0 * s[0]), -kMaxSpeed, kMaxSpeed);
    double p = std::clamp(s[0] + v, kMinPosition, kMaxPosition);
    if (p <= kMinPosition && v < 0.0) v = 0.0;

    Transition t;
    t.s = s;
    t.a = a;
    t.s_next = State(2);
    t.s_next << p, v;
    t.terminal = is_terminal(t.s_next);
    t.r = state_reward(t.s_next);
    return t;
}

StateBox MountainCar::planning_box() const {
    StateBox box{State(2), State(2)};
    box.lo << kMinPosition, -kMaxSpeed;
    box.hi << kMaxPosition, kMaxSpeed;
    return box;
}

// -------------------------------------------------------------------- pendulum

State Pendulum::sample_start(Rng& rng) const {
    std::uniform_real_distribution<double> spread(-p_.start_spread, p_.start_spread);
    State s(2);
    s[0] = spread(rng);
    s[1] = spread(rng);
    return s;
}

State Pendulum::integrate(const State& s, double u) const {
    const double theta = s[0], omega = s[1];
    const double alpha = 1.0 / (p_.pole_mass + p_.cart_mass);
    const double ml = p_.pole_mass * p_.length;
    const double c = std::cos(theta);
    const double accel = (p_.gravity * std::sin(theta) - alpha * ml * omega * omega * std::sin(2.0 * theta) / 2.0 -
                          alpha * c * u) /
                         (4.0 * p_.length / 3.0 - alpha * ml * c * c);
    State out(2);
    out << theta + p_.dt * omega, omega + p_.dt * accel;
    return out;
}

Transition Pendulum::step(const State& s, int a, Rng& rng) const {
    check_action(a);
    require(s.size() == 2, "Pendulum: state must be (angle, angular velocity)");
    const double noise = std::uniform_real_distribution<double>(-p_.noise, p_.noise)(rng);
    const double u = p_.force * static_cast<double>(a - 1) + noise;

    Transition t;
    t.s = s;
    t.a = a;
    t.s_next = integrate(s, u);
    t.terminal = is_terminal(t.s_next);
    t.r = state_reward(t.s_next);
    return t;
}

bool Pendulum::is_terminal(const State& s) const { return std::abs(s[0]) > std::numbers::pi / 2.0; }

StateBox Pendulum::planning_box() const {
    StateBox box{State(2), State(2)};
    box.lo << -std::numbers::pi / 2.0, -3.0;
    box.hi << std::numbers::pi / 2.0, 3.0;
    return box;
}

// ------------------------------------------------------------------- episodes

std::unique_ptr<Environment> make_environment(const std::string& name) {
    if (name == "mountain_car") return std::make_unique<MountainCar>();
    if (name == "pendulum") return std::make_unique<Pendulum>();
    throw ContractViolation("make_environment: unknown environment '" + name + "'");
}

EpisodeLog run_episode_from(const Environment& env, const Policy& policy, State start, int horizon, Rng& rng,
                            bool keep_transitions) {
    require(horizon >= 0 && horizon <= env.horizon(), "run_episode: horizon exceeds the environment cap");
    EpisodeLog log;
    State s = std::move(start);
    double factor = 1.0;
    for (int t = 0; t < horizon; ++t) {
        const int a = policy.act(s, rng);
        require(a >= 0 && a < env.action_count(), "run_episode: policy returned an invalid action");
        Transition tr = env.step(s, a, rng);
        log.discounted_return += factor * tr.r;
        factor *= env.discount();
        ++log.steps;
        s = tr.s_next;
        const bool done = tr.terminal;
        if (keep_transitions) log.transitions.push_back(std::move(tr));
        if (done) {
            log.terminated = true;
            break;
        }
    }
    return log;
}

EpisodeLog run_episode(const Environment& env, const Policy& policy, int horizon, Rng& rng, bool keep_transitions) {
    State start = env.sample_start(rng);
    return run_episode_from(env, policy, std::move(start), horizon, rng, keep_transitions);
}

}  // namespace ctbrl
