#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctbrl/types.hpp"

namespace ctbrl {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

using Metric = std::function<double(std::span<const double>, std::span<const double>)>;

double l1_distance(std::span<const double> a, std::span<const double> b);
double l2_distance(std::span<const double> a, std::span<const double> b);

struct CoverTreeConfig {
    double zoom = 2.0;  // zeta > 1
    Metric metric = l1_distance;
    std::string metric_name = "l1";
};

/// Root-first node list. Consecutive entries are parent and child.
using NodePath = std::vector<NodeId>;

/// Where a point would go. Computing the plan does not touch the tree, so a
/// caller can do fallible work against it before committing.
struct InsertPlan {
    NodeId parent = kNoNode;  // kNoNode: the point becomes the root
    int level = 0;
    int root_level = 0;       // root level after the insertion
    std::uint32_t depth = 0;
};

struct AuditReport {
    bool ok = true;
    std::string violation;
};

/// Cover tree in the explicit (reduced) representation: each point is stored
/// once, at the highest level it occupies.
///
/// Invariants, with zeta the zoom and level(i) the level of node i:
///   - a child's level is strictly below its parent's, depth = parent depth + 1;
///   - parent proximity: d(child, parent) <= zeta^{level(child) + 1};
///   - sibling separation: the children a node gains at level l, together
///     with the node's own copy at l, are pairwise more than zeta^l apart
///     (exactly coincident points are exempt). These are the siblings of the
///     implicit tree; a child explicit at a higher level reaches level l
///     through its own copies and so has a different implicit parent there.
/// Separation between points in different implicit subtrees is not enforced;
/// the classic insertion descent does not guarantee it and no query relies on it.
///
/// Neighborhoods. Let L be the root level and R = zeta^{L+1} / (zeta - 1),
/// the radius within which every stored point lies from the root. Node i owns
/// the ball of radius R * zeta^{-depth(i)}. Every ancestor's ball contains
/// all of its descendants, so the ancestor chain of a stored point lies
/// entirely inside its own path.
///
/// Single writer; queries are safe between writes.
class CoverTree {
public:
    CoverTree(int dim, CoverTreeConfig config = {});

    int dim() const { return dim_; }
    std::size_t size() const { return levels_.size(); }
    bool empty() const { return levels_.empty(); }
    const CoverTreeConfig& config() const { return config_; }

    NodeId root() const;
    int root_level() const { return root_level_; }

    std::span<const double> point(NodeId id) const {
        return {points_.data() + static_cast<std::size_t>(id) * dim_, static_cast<std::size_t>(dim_)};
    }
    State point_vector(NodeId id) const;
    int level(NodeId id) const { return levels_[id]; }
    std::uint32_t depth(NodeId id) const { return depths_[id]; }
    NodeId parent(NodeId id) const { return parents_[id]; }
    const std::vector<NodeId>& children(NodeId id) const { return children_[id]; }

    double distance(std::span<const double> a, std::span<const double> b) const {
        return config_.metric(a, b);
    }
    double zoom_pow(int exponent) const;

    /// Radius of node `id`'s neighborhood under the current root level.
    double radius(NodeId id) const;

    InsertPlan plan_insert(std::span<const double> point) const;
    NodeId commit(const InsertPlan& plan, std::span<const double> point);
    NodeId insert(std::span<const double> point) { return commit(plan_insert(point), point); }
    NodeId insert(const State& s) { return insert(std::span<const double>(s.data(), s.size())); }

    /// Stored point at minimum distance; ties go to the earliest insertion.
    NodeId nearest(std::span<const double> query) const;
    NodeId nearest(const State& s) const { return nearest(std::span<const double>(s.data(), s.size())); }

    /// Root-first chain of nodes whose neighborhoods contain `query`.
    ///
    /// The descent follows the lineage of the query's nearest stored point
    /// (ties: deepest, then latest inserted) and stops before the first node
    /// whose ball misses the query. The root always heads the path, so the
    /// map from points to paths is total. For a stored point the path is its
    /// full ancestor chain, ending at the point's own node.
    NodePath containing_path(std::span<const double> query) const;
    NodePath containing_path(const State& s) const {
        return containing_path(std::span<const double>(s.data(), s.size()));
    }

    /// Root-first ancestors of `id`, including `id`.
    NodePath lineage(NodeId id) const;

    AuditReport audit() const;

    /// Flat record stream: {"dim", "zoom", "metric", "root_level",
    /// "nodes": [{"id", "parent", "level", "depth", "point"}...]} in id order.
    nlohmann::json to_json() const;
    /// Inverse of to_json(). Only the "l1" and "l2" metrics can be restored.
    static CoverTree from_json(const nlohmann::json& j);

private:
    struct Candidate {
        NodeId id;
        double dist;
        std::size_t next_child = 0;
    };

    template <class Better>
    NodeId search(std::span<const double> query, Better better) const;

    void check_dim(std::span<const double> p) const {
        require(static_cast<int>(p.size()) == dim_, "CoverTree: point dimension mismatch");
    }

    int dim_;
    CoverTreeConfig config_;
    int root_level_ = 0;
    std::vector<double> points_;
    std::vector<int> levels_;
    std::vector<std::uint32_t> depths_;
    std::vector<NodeId> parents_;
    std::vector<std::vector<NodeId>> children_;  // sorted by level, highest first
};

}  // namespace ctbrl
