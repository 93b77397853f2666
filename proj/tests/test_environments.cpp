#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "ctbrl/environments.hpp"

using namespace ctbrl;

namespace {

State state(double a, double b) {
    State s(2);
    s << a, b;
    return s;
}

enum : int { kLeft = 0, kNone = 1, kRight = 2 };

/// Energy pumping: push in the direction of motion.
FunctionPolicy pump() {
    return FunctionPolicy([](const State& s, Rng&) { return s[1] >= 0.0 ? kRight : kLeft; });
}

/// Proportional-derivative bang-bang balance controller. A positive force
/// pushes the pole towards negative angles, so the restoring force has the
/// sign of 10 theta + 3 theta'.
FunctionPolicy balance() {
    return FunctionPolicy([](const State& s, Rng&) {
        const double c = 10.0 * s[0] + 3.0 * s[1];
        return c > 0.0 ? kRight : (c < 0.0 ? kLeft : kNone);
    });
}

}  // namespace

TEST_CASE("mountain car reaches the goal boundary as a zero-reward terminal") {
    MountainCar env;
    Rng rng(1);
    const Transition t = env.step(state(0.49, 0.05), kRight, rng);
    CHECK(t.s_next[0] == 0.5);
    CHECK(t.terminal);
    CHECK(t.r == 0.0);
    const Transition mid = env.step(state(0.0, 0.0), kNone, rng);
    CHECK_FALSE(mid.terminal);
    CHECK(mid.r == -1.0);
}

TEST_CASE("mountain car valley bottom is an equilibrium") {
    MountainCar env;
    Rng rng(2);
    const double bottom = -std::numbers::pi / 6.0;
    const Transition t = env.step(state(bottom, 0.0), kNone, rng);
    CHECK(std::abs(t.s_next[1]) < 1e-15);
    CHECK(std::abs(t.s_next[0] - bottom) < 1e-15);
}

TEST_CASE("mountain car left wall zeroes the velocity") {
    MountainCar env;
    Rng rng(3);
    const Transition t = env.step(state(-1.19, -0.05), kLeft, rng);
    CHECK(t.s_next[0] == MountainCar::kMinPosition);
    CHECK(t.s_next[1] == 0.0);
}

TEST_CASE("mountain car: full forward from rest fails, pumping succeeds") {
    MountainCar env;
    Rng rng(4);
    FunctionPolicy forward([](const State&, Rng&) { return kRight; });
    const auto direct = run_episode_from(env, forward, state(-0.5, 0.0), 1000, rng);
    CHECK_FALSE(direct.terminated);
    CHECK(direct.steps == 1000);
    const auto pumped = run_episode_from(env, pump(), state(-0.5, 0.0), 1000, rng);
    CHECK(pumped.terminated);
    CHECK(pumped.steps < 1000);
}

TEST_CASE("mountain car stays in bounds with rewards in {-1, 0}") {
    MountainCar env;
    Rng rng(5);
    UniformPolicy uniform(3);
    for (int e = 0; e < 20; ++e) {
        const auto log = run_episode(env, uniform, env.horizon(), rng);
        CHECK(log.steps <= 1000);
        for (const auto& t : log.transitions) {
            CHECK(t.s_next[0] >= MountainCar::kMinPosition);
            CHECK(t.s_next[0] <= MountainCar::kMaxPosition);
            CHECK(std::abs(t.s_next[1]) <= MountainCar::kMaxSpeed);
            CHECK((t.r == -1.0 || t.r == 0.0));
        }
    }
    for (int k = 0; k < 100; ++k) {
        const State s = env.sample_start(rng);
        CHECK(s[0] >= -1.2);
        CHECK(s[0] < 0.5);
        CHECK(std::abs(s[1]) <= 0.07);
    }
}

TEST_CASE("pendulum upright rest is a fixed point without noise") {
    Pendulum::Params p;
    p.noise = 0.0;
    Pendulum env(p);
    Rng rng(6);
    const Transition t = env.step(state(0.0, 0.0), kNone, rng);
    CHECK(t.s_next == state(0.0, 0.0));
    CHECK(t.r == 0.0);
    CHECK_FALSE(t.terminal);
}

TEST_CASE("pendulum Euler step matches the hand-evaluated force law") {
    Pendulum env;
    const State s = state(0.2, -0.3);
    const double u = 50.0;
    const double alpha = 0.1, ml = 1.0;
    const double acc = (9.8 * std::sin(0.2) - alpha * ml * 0.09 * std::sin(0.4) / 2.0 - alpha * std::cos(0.2) * u) /
                       (2.0 / 3.0 - alpha * ml * std::cos(0.2) * std::cos(0.2));
    const State next = env.integrate(s, u);
    CHECK(next[0] == doctest::Approx(0.2 - 0.03).epsilon(1e-14));
    CHECK(next[1] == doctest::Approx(-0.3 + 0.1 * acc).epsilon(1e-14));
}

TEST_CASE("pendulum start states are small perturbations") {
    Pendulum env;
    Rng rng(7);
    for (int k = 0; k < 200; ++k) {
        const State s = env.sample_start(rng);
        CHECK(std::abs(s[0]) <= 0.1);
        CHECK(std::abs(s[1]) <= 0.1);
    }
}

TEST_CASE("pendulum feedback controller balances 3000 steps in 100 trials") {
    Pendulum env;
    const auto policy = balance();
    int balanced = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(1000 + trial);
        const auto log = run_episode(env, policy, env.horizon(), rng, false);
        if (!log.terminated && log.steps == 3000) ++balanced;
        CHECK(log.discounted_return == 0.0);
    }
    CHECK(balanced == 100);
}

TEST_CASE("pendulum uniform policy falls fast; -1 only at the terminal step") {
    Pendulum env;
    UniformPolicy uniform(3);
    Rng rng(8);
    std::vector<int> lengths;
    for (int e = 0; e < 100; ++e) {
        const auto log = run_episode(env, uniform, env.horizon(), rng);
        lengths.push_back(log.steps);
        int penalties = 0;
        for (std::size_t k = 0; k < log.transitions.size(); ++k) {
            const auto& t = log.transitions[k];
            CHECK((t.r == -1.0 || t.r == 0.0));
            if (t.r == -1.0) {
                ++penalties;
                CHECK(t.terminal);
                CHECK(k + 1 == log.transitions.size());
            }
        }
        CHECK(penalties == (log.terminated ? 1 : 0));
        if (log.terminated)
            CHECK(log.discounted_return == doctest::Approx(-std::pow(0.95, log.steps - 1)));
    }
    std::nth_element(lengths.begin(), lengths.begin() + 50, lengths.end());
    CHECK(lengths[50] < 200);
}

TEST_CASE("episodes: zero horizon, determinism and invalid actions") {
    Pendulum env;
    UniformPolicy uniform(3);
    Rng rng(9);
    const auto empty = run_episode(env, uniform, 0, rng);
    CHECK(empty.transitions.empty());
    CHECK(empty.steps == 0);

    Rng a(10), b(10);
    const auto la = run_episode(env, uniform, 500, a);
    const auto lb = run_episode(env, uniform, 500, b);
    REQUIRE(la.transitions.size() == lb.transitions.size());
    for (std::size_t k = 0; k < la.transitions.size(); ++k) {
        CHECK(la.transitions[k].s_next == lb.transitions[k].s_next);
        CHECK(la.transitions[k].a == lb.transitions[k].a);
    }

    FunctionPolicy bad([](const State&, Rng&) { return 3; });
    CHECK_THROWS_AS(run_episode(env, bad, 10, rng), ContractViolation);
    CHECK_THROWS_AS(run_episode(env, uniform, 3001, rng), ContractViolation);
    CHECK_THROWS_AS(make_environment("cart_pole"), ContractViolation);
}

TEST_CASE("reward model mirrors the environment") {
    auto env = make_environment("mountain_car");
    const auto rm = env->reward_model();
    CHECK(rm.state_reward(state(0.5, 0.0)) == 0.0);
    CHECK(rm.terminal(state(0.5, 0.0)));
    CHECK(rm.state_reward(state(0.0, 0.0)) == -1.0);
    auto pend = make_environment("pendulum");
    CHECK(pend->reward_model().state_reward(state(2.0, 0.0)) == -1.0);
}
