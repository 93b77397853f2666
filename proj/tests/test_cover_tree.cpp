#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"

#include "ctbrl/cover_tree.hpp"

using namespace ctbrl;

namespace {

std::vector<State> uniform_points(int count, int dim, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<State> pts;
    for (int i = 0; i < count; ++i) {
        State s(dim);
        for (int k = 0; k < dim; ++k) s[k] = unit(rng);
        pts.push_back(s);
    }
    return pts;
}

State scalar(double v) { return State::Constant(1, v); }

NodeId brute_nearest(const CoverTree& tree, const State& q) {
    NodeId best = 0;
    double best_d = tree.distance(as_span(q), tree.point(0));
    for (NodeId i = 1; i < tree.size(); ++i) {
        const double d = tree.distance(as_span(q), tree.point(i));
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

void check_path(const CoverTree& tree, const State& q) {
    const NodePath path = tree.containing_path(q);
    REQUIRE(!path.empty());
    CHECK(path.front() == tree.root());
    for (std::size_t k = 1; k < path.size(); ++k) {
        CHECK(tree.parent(path[k]) == path[k - 1]);
        CHECK(l1_distance(as_span(q), tree.point(path[k])) <= tree.radius(path[k]));
    }
}

}  // namespace

TEST_CASE("first point becomes the root") {
    CoverTree tree(2);
    CHECK(tree.empty());
    const NodeId id = tree.insert(State::Constant(2, 0.3));
    CHECK(id == tree.root());
    CHECK(tree.depth(id) == 0);
    CHECK(tree.parent(id) == kNoNode);
    CHECK(tree.containing_path(State::Constant(2, 50.0)) == NodePath{id});
}

TEST_CASE("queries on an empty tree throw") {
    CoverTree tree(1);
    CHECK_THROWS_AS(tree.nearest(scalar(0.0)), EmptyStructureError);
    CHECK_THROWS_AS(tree.containing_path(scalar(0.0)), EmptyStructureError);
    CHECK_THROWS_AS(tree.root(), EmptyStructureError);
}

TEST_CASE("dimension mismatch is a contract violation") {
    CoverTree tree(2);
    CHECK_THROWS_AS(tree.insert(scalar(1.0)), ContractViolation);
    CHECK_THROWS_AS(CoverTree(2, CoverTreeConfig{1.0}), ContractViolation);
}

TEST_CASE("audit passes after every one of 1000 random insertions") {
    Rng rng(7);
    CoverTree tree(2);
    bool all_ok = true;
    for (const auto& p : uniform_points(1000, 2, rng)) {
        tree.insert(p);
        const auto report = tree.audit();
        if (!report.ok) {
            all_ok = false;
            FAIL(report.violation);
            break;
        }
    }
    CHECK(all_ok);
    CHECK(tree.size() == 1000);
}

TEST_CASE("audit holds for other zooms, the l2 metric and far-away points") {
    Rng rng(8);
    std::normal_distribution<double> wide(0.0, 40.0);
    for (double zoom : {1.3, 2.0, 3.5}) {
        CoverTree tree(3, CoverTreeConfig{zoom, l2_distance, "l2"});
        for (int i = 0; i < 400; ++i) {
            State s(3);
            s << wide(rng), wide(rng), 1e-3 * wide(rng);
            tree.insert(s);
        }
        const auto report = tree.audit();
        CHECK_MESSAGE(report.ok, report.violation);
    }
}

TEST_CASE("duplicates attach at the next level down at distance zero") {
    CoverTree tree(2);
    Rng rng(9);
    for (const auto& p : uniform_points(30, 2, rng)) tree.insert(p);
    const State dup = tree.point_vector(17);
    const NodeId a = tree.insert(dup);
    const NodeId b = tree.insert(dup);
    CHECK(a != b);
    CHECK(tree.distance(tree.point(a), tree.point(tree.parent(a))) == 0.0);
    CHECK(tree.level(a) == tree.level(tree.parent(a)) - 1);
    CHECK(tree.audit().ok);
    // The newest copy closes its own path.
    CHECK(tree.containing_path(dup).back() == b);
}

TEST_CASE("nearest matches a brute-force scan") {
    Rng rng(10);
    CoverTree tree(2);
    const auto pts = uniform_points(200, 2, rng);
    for (const auto& p : pts) tree.insert(p);
    for (const auto& q : uniform_points(50, 2, rng)) CHECK(tree.nearest(q) == brute_nearest(tree, q));
    for (NodeId i = 0; i < 200; i += 13) CHECK(tree.nearest(pts[i]) == i);
}

TEST_CASE("nearest breaks ties by first insertion") {
    CoverTree tree(1);
    tree.insert(scalar(0.0));
    tree.insert(scalar(1.0));
    tree.insert(scalar(-1.0));
    CHECK(tree.nearest(scalar(0.5)) == 0);
    CHECK(tree.nearest(scalar(-0.5)) == 0);
    const NodeId copy = tree.insert(scalar(1.0));
    CHECK(tree.nearest(scalar(1.0)) == 1);
    CHECK(copy == 3);
}

TEST_CASE("single-node tree answers every query with the root") {
    CoverTree tree(1);
    tree.insert(scalar(4.0));
    CHECK(tree.nearest(scalar(-100.0)) == 0);
    CHECK(tree.nearest(scalar(4.0)) == 0);
}

TEST_CASE("three-point chain: the path through 0, 0.4, 0.45 covers 0.44") {
    CoverTree tree(1);
    const NodeId r = tree.insert(scalar(0.0));
    const NodeId a = tree.insert(scalar(0.4));
    const NodeId b = tree.insert(scalar(0.45));
    REQUIRE(tree.parent(a) == r);
    REQUIRE(tree.parent(b) == a);
    // Radius table at root level 0 with zoom 2: 2, 1, 0.5.
    CHECK(tree.root_level() == 0);
    CHECK(tree.radius(r) == doctest::Approx(2.0));
    CHECK(tree.radius(a) == doctest::Approx(1.0));
    CHECK(tree.radius(b) == doctest::Approx(0.5));
    CHECK(tree.containing_path(scalar(0.44)) == NodePath{r, a, b});
    // Outside the leaf balls only the root remains.
    CHECK(tree.containing_path(scalar(-1.9)) == NodePath{r});
}

TEST_CASE("paths are contiguous, contain the query, and end at a just-inserted point") {
    Rng rng(12);
    CoverTree tree(2);
    for (const auto& p : uniform_points(600, 2, rng)) {
        const NodeId id = tree.insert(p);
        const NodePath path = tree.containing_path(p);
        CHECK(path.back() == id);
        CHECK(path == tree.lineage(id));
    }
    for (const auto& q : uniform_points(100, 2, rng)) check_path(tree, q);
    State far(2);
    far << 30.0, -30.0;
    check_path(tree, far);
}

TEST_CASE("the root is raised for points outside its cover") {
    CoverTree tree(1);
    tree.insert(scalar(0.0));
    CHECK(tree.root_level() == 0);
    tree.insert(scalar(10.0));
    CHECK(tree.root_level() == 4);
    CHECK(tree.level(tree.root()) == 4);
    tree.insert(scalar(-1000.0));
    CHECK(tree.zoom_pow(tree.root_level()) >= 1000.0);
    CHECK(tree.audit().ok);
}

TEST_CASE("median path length grows logarithmically") {
    Rng rng(13);
    CoverTree tree(2);
    const auto pts = uniform_points(4096, 2, rng);
    auto median_path = [&](int probes) {
        Rng qrng(99);
        std::vector<double> lens;
        for (const auto& q : uniform_points(probes, 2, qrng))
            lens.push_back(static_cast<double>(tree.containing_path(q).size()));
        std::nth_element(lens.begin(), lens.begin() + lens.size() / 2, lens.end());
        return lens[lens.size() / 2];
    };
    double at_64 = 0.0;
    for (int i = 0; i < 4096; ++i) {
        tree.insert(pts[i]);
        if (i + 1 == 64) at_64 = median_path(201);
    }
    const double at_4096 = median_path(201);
    CHECK(at_4096 > at_64);
    CHECK(at_4096 < 3.0 * at_64);
}

TEST_CASE("JSON round trip preserves structure and queries") {
    Rng rng(14);
    CoverTree tree(2);
    for (const auto& p : uniform_points(150, 2, rng)) tree.insert(p);
    const auto copy = CoverTree::from_json(nlohmann::json::parse(tree.to_json().dump()));
    CHECK(copy.size() == tree.size());
    CHECK(copy.root_level() == tree.root_level());
    for (NodeId i = 0; i < tree.size(); ++i) {
        CHECK(copy.parent(i) == tree.parent(i));
        CHECK(copy.level(i) == tree.level(i));
        CHECK(copy.children(i) == tree.children(i));
        CHECK(copy.point_vector(i) == tree.point_vector(i));
    }
    for (const auto& q : uniform_points(20, 2, rng)) CHECK(copy.containing_path(q) == tree.containing_path(q));
    CHECK(copy.audit().ok);
}

TEST_CASE("plan then commit equals insert and planning is side-effect free") {
    Rng rng(15);
    CoverTree a(2), b(2);
    for (const auto& p : uniform_points(100, 2, rng)) {
        const auto plan = b.plan_insert({p.data(), 2});
        const auto before = b.size();
        CHECK(b.size() == before);
        a.insert(p);
        b.commit(plan, {p.data(), 2});
    }
    for (NodeId i = 0; i < a.size(); ++i) CHECK(a.parent(i) == b.parent(i));
}
