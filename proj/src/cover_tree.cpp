#include "ctbrl/cover_tree.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ctbrl {

double l1_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return sum;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

CoverTree::CoverTree(int dim, CoverTreeConfig config) : dim_(dim), config_(std::move(config)) {
    require(dim_ > 0, "CoverTree: dimension must be positive");
    require(config_.zoom > 1.0, "CoverTree: zoom must exceed 1");
    require(static_cast<bool>(config_.metric), "CoverTree: metric must be set");
}

NodeId CoverTree::root() const {
    if (empty()) throw EmptyStructureError("CoverTree: tree is empty");
    return 0;
}

State CoverTree::point_vector(NodeId id) const {
    auto p = point(id);
    return Eigen::Map<const State>(p.data(), dim_);
}

double CoverTree::zoom_pow(int exponent) const { return std::pow(config_.zoom, exponent); }

double CoverTree::radius(NodeId id) const {
    return zoom_pow(root_level_ + 1) / (config_.zoom - 1.0) * zoom_pow(-static_cast<int>(depths_[id]));
}

InsertPlan CoverTree::plan_insert(std::span<const double> p) const {
    check_dim(p);
    for (double v : p) require(std::isfinite(v), "CoverTree: point coordinates must be finite");
    if (empty()) return InsertPlan{kNoNode, 0, 0, 0};

    struct Entry {
        NodeId id;
        double dist;
    };
    struct Step {
        int level;
        NodeId nearest;
        double dist;
    };
    auto closest = [](const std::vector<Entry>& set) {
        Entry best = set.front();
        for (const auto& e : set)
            if (e.dist < best.dist || (e.dist == best.dist && e.id < best.id)) best = e;
        return best;
    };
    auto plan_under = [&](NodeId parent, int level, int root_level) {
        return InsertPlan{parent, level, root_level, depths_[parent] + 1};
    };

    const double root_dist = distance(p, point(0));
    int top = root_level_;
    while (zoom_pow(top) < root_dist) ++top;

    std::vector<Entry> cover{{0, root_dist}};
    std::vector<Entry> next;
    std::vector<Step> history;
    int level = top;

    auto fall_back = [&]() {
        for (auto it = history.rbegin(); it != history.rend(); ++it)
            if (it->dist <= zoom_pow(it->level)) return plan_under(it->nearest, it->level - 1, top);
        throw NumericalError("CoverTree::plan_insert: no admissible parent");
    };

    for (;;) {
        // Nodes of `cover` occupy `level`; gather their children one level down.
        next = cover;
        for (const auto& q : cover)
            for (NodeId c : children_[q.id]) {
                if (levels_[c] > level - 1) continue;
                if (levels_[c] < level - 1) break;
                next.push_back({c, distance(p, point(c))});
            }
        const double radius_here = zoom_pow(level);
        const Entry near_next = closest(next);
        if (near_next.dist > radius_here) return fall_back();

        const Entry near_cover = closest(cover);
        history.push_back({level, near_cover.id, near_cover.dist});

        cover.clear();
        for (const auto& e : next)
            if (e.dist <= radius_here) cover.push_back(e);
        --level;

        bool deeper = false;
        for (const auto& q : cover)
            for (NodeId c : children_[q.id])
                if (levels_[c] <= level - 1) {
                    deeper = true;
                    break;
                }
        if (deeper) continue;

        // No children below: the candidate set stays fixed from here on and
        // only its nearest member matters.
        const Entry near = closest(cover);
        if (near.dist == 0.0) {
            NodeId original = near.id;
            for (const auto& e : cover)
                if (e.dist == 0.0 && (depths_[e.id] < depths_[original] ||
                                      (depths_[e.id] == depths_[original] && e.id < original)))
                    original = e.id;
            return plan_under(original, levels_[original] - 1, top);
        }
        if (zoom_pow(level) < near.dist) return fall_back();
        int deepest_pass = level;
        while (zoom_pow(deepest_pass - 1) >= near.dist) --deepest_pass;
        return plan_under(near.id, deepest_pass - 1, top);
    }
}

NodeId CoverTree::commit(const InsertPlan& plan, std::span<const double> p) {
    check_dim(p);
    const auto id = static_cast<NodeId>(size());
    if (plan.parent == kNoNode) {
        require(empty(), "CoverTree::commit: root plan for a non-empty tree");
        root_level_ = plan.level;
    } else {
        require(plan.parent < size(), "CoverTree::commit: stale plan");
        root_level_ = plan.root_level;
        levels_[0] = root_level_;
    }
    points_.insert(points_.end(), p.begin(), p.end());
    levels_.push_back(plan.parent == kNoNode ? root_level_ : plan.level);
    depths_.push_back(plan.parent == kNoNode ? 0 : depths_[plan.parent] + 1);
    parents_.push_back(plan.parent);
    children_.emplace_back();
    if (plan.parent != kNoNode) {
        auto& siblings = children_[plan.parent];
        auto pos = std::find_if(siblings.begin(), siblings.end(),
                                [&](NodeId c) { return levels_[c] < plan.level; });
        siblings.insert(pos, id);
    }
    return id;
}

template <class Better>
NodeId CoverTree::search(std::span<const double> q, Better better) const {
    if (empty()) throw EmptyStructureError("CoverTree: query on an empty tree");
    check_dim(q);

    std::vector<Candidate> cands{{0, distance(q, point(0)), 0}};
    NodeId best = 0;
    double best_dist = cands.front().dist;
    const double slack = 1.0 + 1e-12;

    for (;;) {
        bool any = false;
        int next_level = std::numeric_limits<int>::min();
        for (const auto& c : cands) {
            const auto& ch = children_[c.id];
            if (c.next_child < ch.size()) {
                any = true;
                next_level = std::max(next_level, levels_[ch[c.next_child]]);
            }
        }
        if (!any) break;

        const std::size_t existing = cands.size();
        for (std::size_t k = 0; k < existing; ++k) {
            const auto& ch = children_[cands[k].id];
            while (cands[k].next_child < ch.size() && levels_[ch[cands[k].next_child]] == next_level) {
                const NodeId id = ch[cands[k].next_child++];
                const double d = distance(q, point(id));
                cands.push_back({id, d, 0});
                if (better(d, id, best_dist, best)) {
                    best = id;
                    best_dist = d;
                }
            }
        }

        // Anything not yet seen below a candidate is within this of it.
        const double reach = zoom_pow(next_level + 1) / (config_.zoom - 1.0);
        std::erase_if(cands, [&](const Candidate& c) {
            return c.next_child >= children_[c.id].size() || c.dist > (best_dist + reach) * slack;
        });
    }
    return best;
}

NodeId CoverTree::nearest(std::span<const double> query) const {
    return search(query, [](double d, NodeId id, double best_d, NodeId best) {
        return d < best_d || (d == best_d && id < best);
    });
}

NodePath CoverTree::lineage(NodeId id) const {
    NodePath path;
    for (NodeId n = id; n != kNoNode; n = parents_[n]) path.push_back(n);
    std::reverse(path.begin(), path.end());
    return path;
}

NodePath CoverTree::containing_path(std::span<const double> query) const {
    const NodeId anchor = search(query, [this](double d, NodeId id, double best_d, NodeId best) {
        if (d != best_d) return d < best_d;
        if (depths_[id] != depths_[best]) return depths_[id] > depths_[best];
        return id > best;
    });
    NodePath chain = lineage(anchor);
    NodePath path{chain.front()};
    for (std::size_t k = 1; k < chain.size(); ++k) {
        if (distance(query, point(chain[k])) > radius(chain[k])) break;
        path.push_back(chain[k]);
    }
    return path;
}

AuditReport CoverTree::audit() const {
    AuditReport report;
    auto fail = [&](const std::string& what) {
        report.ok = false;
        report.violation = what;
        return report;
    };
    if (empty()) return report;
    if (parents_[0] != kNoNode || depths_[0] != 0) return fail("root has a parent or nonzero depth");
    if (levels_[0] != root_level_) return fail("root level out of sync");

    for (NodeId i = 1; i < size(); ++i) {
        const NodeId par = parents_[i];
        std::ostringstream where;
        where << "node " << i << " (parent " << par << "): ";
        if (par >= i) return fail(where.str() + "parent not inserted before child");
        if (depths_[i] != depths_[par] + 1) return fail(where.str() + "depth is not parent depth + 1");
        if (levels_[i] >= levels_[par]) return fail(where.str() + "level not below parent level");
        const auto& sib = children_[par];
        if (std::find(sib.begin(), sib.end(), i) == sib.end()) return fail(where.str() + "missing from parent's children");
        if (distance(point(i), point(par)) > zoom_pow(levels_[i] + 1))
            return fail(where.str() + "parent proximity violated");
    }
    for (NodeId i = 0; i < size(); ++i) {
        const auto& ch = children_[i];
        for (std::size_t k = 1; k < ch.size(); ++k)
            if (levels_[ch[k - 1]] < levels_[ch[k]]) return fail("children not sorted by level");
        for (NodeId c : ch)
            if (parents_[c] != i) return fail("child list disagrees with parent link");
    }
    // Siblings in the implicit tree: the children a parent gains at one level,
    // together with the parent's own copy there, are more than zeta^l apart.
    for (NodeId par = 0; par < size(); ++par) {
        const auto& ch = children_[par];
        for (std::size_t a = 0; a < ch.size(); ++a) {
            for (std::size_t b = a; b <= ch.size(); ++b) {
                const NodeId x = ch[a];
                const NodeId y = b == ch.size() ? par : ch[b];
                if (x == y || (y != par && levels_[x] != levels_[y])) continue;
                const double d = distance(point(x), point(y));
                if (d == 0.0) continue;
                const int shared = std::min(levels_[x], levels_[y]);
                if (d <= zoom_pow(shared)) {
                    std::ostringstream msg;
                    msg << "sibling separation violated between " << x << " and " << y << " at level " << shared;
                    return fail(msg.str());
                }
            }
        }
    }
    return report;
}

nlohmann::json CoverTree::to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (NodeId i = 0; i < size(); ++i) {
        auto p = point(i);
        nodes.push_back({{"id", i},
                         {"parent", parents_[i] == kNoNode ? -1 : static_cast<long long>(parents_[i])},
                         {"level", levels_[i]},
                         {"depth", depths_[i]},
                         {"point", std::vector<double>(p.begin(), p.end())}});
    }
    return {{"dim", dim_},
            {"zoom", config_.zoom},
            {"metric", config_.metric_name},
            {"root_level", root_level_},
            {"nodes", std::move(nodes)}};
}

CoverTree CoverTree::from_json(const nlohmann::json& j) {
    CoverTreeConfig cfg;
    cfg.zoom = j.at("zoom").get<double>();
    cfg.metric_name = j.at("metric").get<std::string>();
    if (cfg.metric_name == "l1")
        cfg.metric = l1_distance;
    else if (cfg.metric_name == "l2")
        cfg.metric = l2_distance;
    else
        throw ContractViolation("CoverTree::from_json: unknown metric " + cfg.metric_name);

    CoverTree tree(j.at("dim").get<int>(), cfg);
    tree.root_level_ = j.at("root_level").get<int>();
    for (const auto& n : j.at("nodes")) {
        const auto id = n.at("id").get<NodeId>();
        require(id == tree.size(), "CoverTree::from_json: nodes out of order");
        const auto pt = n.at("point").get<std::vector<double>>();
        require(static_cast<int>(pt.size()) == tree.dim_, "CoverTree::from_json: point dimension mismatch");
        const long long par = n.at("parent").get<long long>();
        tree.points_.insert(tree.points_.end(), pt.begin(), pt.end());
        tree.levels_.push_back(n.at("level").get<int>());
        tree.depths_.push_back(n.at("depth").get<std::uint32_t>());
        tree.parents_.push_back(par < 0 ? kNoNode : static_cast<NodeId>(par));
        tree.children_.emplace_back();
        if (par >= 0) {
            require(static_cast<std::size_t>(par) < id, "CoverTree::from_json: parent after child");
            auto& sib = tree.children_[static_cast<std::size_t>(par)];
            auto pos = std::find_if(sib.begin(), sib.end(),
                                    [&](NodeId c) { return tree.levels_[c] < tree.levels_[id]; });
            sib.insert(pos, id);
        }
    }
    return tree;
}

}  // namespace ctbrl
