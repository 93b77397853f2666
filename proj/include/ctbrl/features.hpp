#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctbrl/environments.hpp"
#include "ctbrl/types.hpp"

namespace ctbrl {

/// Fixed state features phi(s) for linear value functions.
class FeatureMap {
public:
    virtual ~FeatureMap() = default;
    virtual int size() const = 0;
    virtual int state_dim() const = 0;
    /// Writes phi(s) into `out` (length size()).
    virtual void features(const State& s, Eigen::Ref<Vector> out) const = 0;
    virtual nlohmann::json descriptor() const = 0;

    Vector operator()(const State& s) const {
        Vector out(size());
        features(s, out);
        return out;
    }
};

using FeatureMapPtr = std::shared_ptr<const FeatureMap>;

/// Gaussian RBFs on an equidistant grid over the normalized state box.
///
/// States are mapped to u = (s - lo) / (hi - lo); along an axis with n
/// centers they sit at the cell midpoints (i + 0.5) / n, and the bandwidth is
/// the center spacing 1/n: phi_c(s) = exp(-|u - c|^2 / (2 sigma^2)). States
/// outside the box are not clipped; their features decay smoothly.
class RbfBasis final : public FeatureMap {
public:
    RbfBasis(StateBox box, std::vector<int> grid, bool constant);

    int size() const override { return static_cast<int>(centers_.size()) + (constant_ ? 1 : 0); }
    int state_dim() const override { return box_.dim(); }
    void features(const State& s, Eigen::Ref<Vector> out) const override;
    nlohmann::json descriptor() const override;

    const std::vector<Vector>& centers() const { return centers_; }
    double bandwidth(int axis) const { return 1.0 / grid_[static_cast<std::size_t>(axis)]; }

private:
    StateBox box_;
    std::vector<int> grid_;
    bool constant_;
    std::vector<Vector> centers_;
};

/// One-hot code of the nearest anchor state (ties: first anchor). With the
/// anchors of a finite MDP this is the exact tabular basis.
class TabularBasis final : public FeatureMap {
public:
    explicit TabularBasis(std::vector<State> anchors);

    int size() const override { return static_cast<int>(anchors_.size()); }
    int state_dim() const override { return static_cast<int>(anchors_.front().size()); }
    void features(const State& s, Eigen::Ref<Vector> out) const override;
    nlohmann::json descriptor() const override;

private:
    std::vector<State> anchors_;
};

/// What a value basis is fit to: values of uniformly drawn planning states,
/// or Q values on logged episodes.
enum class BasisUse { kPlanning, kLspi };

/// 3x3 grid for the pendulum, 4x4 for mountain car, each plus a constant,
/// spanning the planning box. For LSPI on the pendulum the velocity axis
/// spans [-1.5, 1.5] instead, which puts the velocity centers at -1, 0, 1
/// where logged episodes live.
FeatureMapPtr make_default_basis(const Environment& env, BasisUse use = BasisUse::kPlanning);

FeatureMapPtr feature_map_from_json(const nlohmann::json& j);

}  // namespace ctbrl
