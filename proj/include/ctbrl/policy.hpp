#pragma once

#include <functional>
#include <memory>

#include "ctbrl/types.hpp"

namespace ctbrl {

/// Maps a state to an action index. Implementations must be safe to call
/// concurrently when each caller brings its own engine.
class Policy {
public:
    virtual ~Policy() = default;
    virtual int act(const State& s, Rng& rng) const = 0;
};

class UniformPolicy final : public Policy {
public:
    explicit UniformPolicy(int action_count) : actions_(action_count) {
        require(action_count > 0, "UniformPolicy: need at least one action");
    }
    int act(const State&, Rng& rng) const override {
        return std::uniform_int_distribution<int>(0, actions_ - 1)(rng);
    }

private:
    int actions_;
};

/// Adapts any callable.
class FunctionPolicy final : public Policy {
public:
    using Fn = std::function<int(const State&, Rng&)>;
    explicit FunctionPolicy(Fn fn) : fn_(std::move(fn)) {}
    int act(const State& s, Rng& rng) const override { return fn_(s, rng); }

private:
    Fn fn_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

}  // namespace ctbrl
