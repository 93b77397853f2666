#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ctbrl/policy.hpp"
#include "ctbrl/sampled_mdp.hpp"
#include "ctbrl/types.hpp"

namespace ctbrl {

struct Transition {
    State s;
    int a = 0;
    double r = 0.0;
    State s_next;
    bool terminal = false;
};

/// Axis-aligned state region, used for uniform state sampling and for
/// normalizing features.
struct StateBox {
    State lo;
    State hi;
    int dim() const { return static_cast<int>(lo.size()); }
    State sample(Rng& rng) const;
};

/// An episodic benchmark. The reward on entering s' is rho(s'); stepping is a
/// pure function of (state, action, engine draws).
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string name() const = 0;
    virtual int state_dim() const = 0;
    int action_count() const { return 3; }
    virtual double discount() const = 0;
    virtual int horizon() const = 0;

    virtual State sample_start(Rng& rng) const = 0;
    virtual Transition step(const State& s, int a, Rng& rng) const = 0;

    virtual double state_reward(const State& s) const = 0;
    virtual bool is_terminal(const State& s) const = 0;
    /// Region that planning samples states from.
    virtual StateBox planning_box() const = 0;

    /// Independent copy; models built from reward_model() hold one.
    virtual std::shared_ptr<const Environment> clone() const = 0;
    /// rho and the terminal test, safe to keep after this object is gone.
    RewardModel reward_model() const;

protected:
    void check_action(int a) const;
};

/// Sutton-Barto mountain car. State (position, velocity); actions reverse,
/// zero, forward. Every step costs -1 until the right hilltop p >= 0.5,
/// which is terminal with reward 0.
class MountainCar final : public Environment {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.5;
    static constexpr double kMaxSpeed = 0.07;
    static constexpr double kGoal = 0.5;

    std::string name() const override { return "mountain_car"; }
    int state_dim() const override { return 2; }
    double discount() const override { return 0.999; }
    int horizon() const override { return 1000; }

    State sample_start(Rng& rng) const override;
    Transition step(const State& s, int a, Rng& rng) const override;
    double state_reward(const State& s) const override { return is_terminal(s) ? 0.0 : -1.0; }
    bool is_terminal(const State& s) const override { return s[0] >= kGoal; }
    StateBox planning_box() const override;
    std::shared_ptr<const Environment> clone() const override { return std::make_shared<MountainCar>(*this); }
};

/// Inverted pendulum on a cart (Lagoudakis-Parr). State (angle, angular
/// velocity); forces -50, 0, +50 N plus uniform noise. Reward 0 while
/// upright, -1 and terminal once |angle| > pi/2.
///
///   theta'' = (g sin(theta) - alpha m l theta'^2 sin(2 theta) / 2 - alpha cos(theta) u)
///             / (4 l / 3 - alpha m l cos^2(theta)),   alpha = 1 / (m + M),
/// integrated by explicit Euler. Note the sign: a positive force pushes the
/// pole towards negative angles.
class Pendulum final : public Environment {
public:
    struct Params {
        double gravity = 9.8;
        double pole_mass = 2.0;
        double cart_mass = 8.0;
        double length = 0.5;
        double force = 50.0;
        double noise = 10.0;  // half-width of the uniform force noise
        double dt = 0.1;
        double start_spread = 0.1;
    };

    Pendulum() = default;
    explicit Pendulum(Params p) : p_(p) {}
    const Params& params() const { return p_; }

    std::string name() const override { return "pendulum"; }
    int state_dim() const override { return 2; }
    double discount() const override { return 0.95; }
    int horizon() const override { return 3000; }

    State sample_start(Rng& rng) const override;
    Transition step(const State& s, int a, Rng& rng) const override;
    /// Deterministic part: one Euler step under total force u.
    State integrate(const State& s, double u) const;
    double state_reward(const State& s) const override { return is_terminal(s) ? -1.0 : 0.0; }
    bool is_terminal(const State& s) const override;
    StateBox planning_box() const override;
    std::shared_ptr<const Environment> clone() const override { return std::make_shared<Pendulum>(*this); }

private:
    Params p_;
};

std::unique_ptr<Environment> make_environment(const std::string& name);

struct EpisodeLog {
    std::vector<Transition> transitions;
    int steps = 0;
    double discounted_return = 0.0;
    bool terminated = false;
};

/// Runs until a terminal state or `horizon` steps. Actions come from
/// `policy`; the same engine drives policy and environment.
EpisodeLog run_episode(const Environment& env, const Policy& policy, int horizon, Rng& rng,
                       bool keep_transitions = true);
/// Same, from a given start state.
EpisodeLog run_episode_from(const Environment& env, const Policy& policy, State start, int horizon, Rng& rng,
                            bool keep_transitions = true);

}  // namespace ctbrl
