#include "ctbrl/features.hpp"

#include <cmath>

namespace ctbrl {

namespace {

std::vector<double> to_std(const State& s) { return {s.data(), s.data() + s.size()}; }

State from_std(const std::vector<double>& v) {
    return Eigen::Map<const State>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

RbfBasis::RbfBasis(StateBox box, std::vector<int> grid, bool constant)
    : box_(std::move(box)), grid_(std::move(grid)), constant_(constant) {
    const int d = box_.dim();
    require(d > 0 && box_.hi.size() == d, "RbfBasis: malformed state box");
    require(static_cast<int>(grid_.size()) == d, "RbfBasis: one grid size per state axis");
    for (int i = 0; i < d; ++i) {
        require(box_.hi[i] > box_.lo[i], "RbfBasis: empty box axis");
        require(grid_[static_cast<std::size_t>(i)] > 0, "RbfBasis: grid sizes must be positive");
    }
    // Enumerate the grid with the first axis varying slowest.
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (;;) {
        Vector c(d);
        for (int i = 0; i < d; ++i) c[i] = (idx[static_cast<std::size_t>(i)] + 0.5) / grid_[static_cast<std::size_t>(i)];
        centers_.push_back(c);
        int axis = d - 1;
        while (axis >= 0 && ++idx[static_cast<std::size_t>(axis)] == grid_[static_cast<std::size_t>(axis)]) {
            idx[static_cast<std::size_t>(axis)] = 0;
            --axis;
        }
        if (axis < 0) break;
    }
}

void RbfBasis::features(const State& s, Eigen::Ref<Vector> out) const {
    require(s.size() == box_.dim(), "RbfBasis: state dimension mismatch");
    const int d = box_.dim();
    Vector u(d), inv_bw(d);
    for (int i = 0; i < d; ++i) {
        u[i] = (s[i] - box_.lo[i]) / (box_.hi[i] - box_.lo[i]);
        inv_bw[i] = grid_[static_cast<std::size_t>(i)];
    }
    for (std::size_t k = 0; k < centers_.size(); ++k) {
        const double r2 = ((u - centers_[k]).cwiseProduct(inv_bw)).squaredNorm();
        out[static_cast<Eigen::Index>(k)] = std::exp(-0.5 * r2);
    }
    if (constant_) out[static_cast<Eigen::Index>(centers_.size())] = 1.0;
}

nlohmann::json RbfBasis::descriptor() const {
    return {{"type", "rbf"}, {"lo", to_std(box_.lo)}, {"hi", to_std(box_.hi)}, {"grid", grid_}, {"constant", constant_}};
}

TabularBasis::TabularBasis(std::vector<State> anchors) : anchors_(std::move(anchors)) {
    require(!anchors_.empty(), "TabularBasis: need at least one anchor");
    for (const auto& a : anchors_) require(a.size() == anchors_.front().size(), "TabularBasis: ragged anchors");
}

void TabularBasis::features(const State& s, Eigen::Ref<Vector> out) const {
    require(s.size() == anchors_.front().size(), "TabularBasis: state dimension mismatch");
    std::size_t best = 0;
    double best_d = (s - anchors_[0]).squaredNorm();
    for (std::size_t k = 1; k < anchors_.size(); ++k) {
        const double d = (s - anchors_[k]).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    out.setZero();
    out[static_cast<Eigen::Index>(best)] = 1.0;
}

nlohmann::json TabularBasis::descriptor() const {
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& a : anchors_) anchors.push_back(to_std(a));
    return {{"type", "tabular"}, {"anchors", anchors}};
}

FeatureMapPtr make_default_basis(const Environment& env, BasisUse use) {
    if (env.name() == "pendulum") {
        StateBox box = env.planning_box();
        if (use == BasisUse::kLspi) {
            box.lo[1] = -1.5;
            box.hi[1] = 1.5;
        }
        return std::make_shared<RbfBasis>(box, std::vector<int>{3, 3}, true);
    }
    if (env.name() == "mountain_car")
        return std::make_shared<RbfBasis>(env.planning_box(), std::vector<int>{4, 4}, true);
    throw ContractViolation("make_default_basis: no default basis for '" + env.name() + "'");
}

FeatureMapPtr feature_map_from_json(const nlohmann::json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "rbf") {
        StateBox box{from_std(j.at("lo").get<std::vector<double>>()), from_std(j.at("hi").get<std::vector<double>>())};
        return std::make_shared<RbfBasis>(box, j.at("grid").get<std::vector<int>>(), j.at("constant").get<bool>());
    }
    if (type == "tabular") {
        std::vector<State> anchors;
        for (const auto& a : j.at("anchors")) anchors.push_back(from_std(a.get<std::vector<double>>()));
        return std::make_shared<TabularBasis>(std::move(anchors));
    }
    throw ContractViolation("feature_map_from_json: unknown basis type '" + type + "'");
}

}  // namespace ctbrl
