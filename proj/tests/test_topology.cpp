#include "infoprop/graph_io.hpp"
#include "infoprop/topology.hpp"

#include "catch_amalgamated.hpp"

#include <cmath>
#include <set>
#include <tuple>

using namespace infoprop;
using Catch::Approx;

namespace {

ClusterGraph grid6() { return build_grid(6, 6, {2, 2, 3, 3}); }

/// Mirror x -> W-1-x of a grid cluster.
ClusterId mirror_x(const GridLayout& L, ClusterId c)
{
    const auto geo = L.geometry(c / 2);
    const bool forward = c % 2 == 0;
    if (geo.y0 == geo.y1)
        return L.cluster(L.avenues - 2 - geo.x0, geo.y0, Axis::horizontal, !forward);
    return L.cluster(L.avenues - 1 - geo.x0, geo.y0, Axis::vertical, forward);
}

/// Transpose (x, y) -> (y, x) on a square grid.
ClusterId transpose(const GridLayout& L, ClusterId c)
{
    const auto geo = L.geometry(c / 2);
    const bool forward = c % 2 == 0;
    if (geo.y0 == geo.y1)
        return L.cluster(geo.y0, geo.x0, Axis::vertical, forward);
    return L.cluster(geo.y0, geo.x0, Axis::horizontal, forward);
}

} // namespace

TEST_CASE("grid cluster counts")
{
    CHECK(grid6().size() == 120);
    CHECK(build_grid(9, 9, {3, 3, 5, 5}).size() == 288);
    const auto g = build_grid(2, 2, {0, 0, 0, 0});
    CHECK(g.size() == 8);
    CHECK(g.clusters_in(Region::periphery).size() == 8);
    CHECK(g.clusters_in(Region::cbd).empty());
}

TEST_CASE("grid rejects a CBD outside the grid")
{
    CHECK_THROWS_AS(build_grid(6, 6, {4, 4, 6, 6}), ConfigError);
    CHECK_THROWS_AS(build_grid(6, 6, {-1, 0, 2, 2}), ConfigError);
    CHECK_THROWS_AS(build_grid(1, 6, {0, 0, 0, 0}), ConfigError);
}

TEST_CASE("grid structure")
{
    const auto g = grid6();
    const GridLayout L{6, 6};
    SECTION("no self loops and no U-turns by default")
    {
        for (const auto& e : g.edges()) {
            CHECK(e.from != e.to);
            CHECK(e.from / 2 != e.to / 2);
        }
    }
    SECTION("edges join head to tail")
    {
        for (const auto& e : g.edges())
            CHECK(L.head(e.from) == L.tail(e.to));
    }
    SECTION("interior clusters have three successors")
    {
        // eastbound cluster from (2,1) into (3,1): north, south, east
        CHECK(g.out_neighbors(L.cluster(2, 1, Axis::horizontal, true)).size() == 3);
        // corner: eastbound into (1,0) from (0,0) has east and north
        CHECK(g.out_neighbors(L.cluster(0, 0, Axis::horizontal, true)).size() == 2);
    }
    SECTION("U-turn switch")
    {
        GridOptions o;
        o.allow_u_turns = true;
        const auto gu = build_grid(6, 6, {2, 2, 3, 3}, o);
        const ClusterId c = L.cluster(2, 1, Axis::horizontal, true);
        CHECK(gu.has_edge(c, c ^ 1u));
        CHECK_FALSE(g.has_edge(c, c ^ 1u));
    }
    SECTION("centers are segment midpoints")
    {
        const ClusterId c = L.cluster(2, 1, Axis::horizontal, false);
        CHECK(g.center(c).x == 2.5);
        CHECK(g.center(c).y == 1.0);
    }
    SECTION("CBD inclusivity")
    {
        // inclusive: the 4 boundary segments of the 1x1 block (8 clusters)
        CHECK(g.clusters_in(Region::cbd).size() == 8);
        GridOptions o;
        o.cbd_inclusive = false;
        CHECK(build_grid(6, 6, {2, 2, 3, 3}, o).clusters_in(Region::cbd).empty());
        CHECK(build_grid(6, 6, {1, 1, 4, 4}, o).clusters_in(Region::cbd).size() == 2 * 12);
    }
}

TEST_CASE("same-segment communication")
{
    GridOptions o;
    o.same_segment_beta = 3.0;
    const auto g = build_grid(6, 6, {2, 2, 3, 3}, o);
    for (ClusterId j = 0; j < g.size(); ++j)
        for (ClusterId k = 0; k < g.size(); ++k)
            CHECK((g.beta(j, k) > 0.0) == (g.segment(j) == g.segment(k)));
    CHECK(g.beta(4, 4) == 3.0);
    CHECK(g.comm_links().size() == 4 * 60);

    ClusterGraph h = build_grid(6, 6, {2, 2, 3, 3});
    set_same_segment_beta(h, 3.0);
    CHECK(h.comm_links().size() == g.comm_links().size());
    set_same_segment_beta(h, 0.0);
    CHECK(h.comm_links().empty());
}

TEST_CASE("distance to the CBD")
{
    const auto g = grid6();
    for (ClusterId x : g.clusters_in(Region::cbd))
        CHECK(distance_to_cbd(g, x) == 0.0);
    // brute force over all pairs
    const auto cbd = g.clusters_in(Region::cbd);
    for (ClusterId x = 0; x < g.size(); ++x) {
        double best = INFINITY;
        for (ClusterId y : cbd)
            best = std::min(best, std::hypot(g.center(x).x - g.center(y).x, g.center(x).y - g.center(y).y));
        CHECK(distance_to_cbd(g, x) == Approx(best).epsilon(1e-15));
    }
    // mirrored clusters sit at equal distance
    const GridLayout L{6, 6};
    for (ClusterId x = 0; x < g.size(); ++x)
        CHECK(distance_to_cbd(g, x) == distance_to_cbd(g, mirror_x(L, x)));
    CHECK_THROWS_AS(distance_to_cbd(build_grid(2, 2, {0, 0, 0, 0}), 0), ConfigError);
}

TEST_CASE("direction classification")
{
    const auto g = grid6();
    const GridLayout L{6, 6};
    SECTION("moving closer is toward the CBD")
    {
        // eastbound (0,2)->(1,2) feeds eastbound (1,2)->(2,2), whose center is nearer the CBD
        const ClusterId j = L.cluster(0, 2, Axis::horizontal, true);
        const ClusterId k = L.cluster(1, 2, Axis::horizontal, true);
        REQUIRE(g.has_edge(j, k));
        CHECK(distance_to_cbd(g, k) < distance_to_cbd(g, j));
        CHECK(classify_direction(g, j, k) == Direction::toward_cbd);
        CHECK(classify_direction(g, k ^ 1u, j ^ 1u) == Direction::toward_periphery);
    }
    SECTION("equal distance in the periphery is toward the periphery")
    {
        // find a periphery edge at equal distance
        const auto sq = cbd_squared_distances(g);
        bool found = false;
        for (const auto& e : g.edges())
            if (g.region(e.from) == Region::periphery && g.region(e.to) == Region::periphery &&
                sq[e.from] == sq[e.to]) {
                CHECK(classify_direction(g, e.from, e.to) == Direction::toward_periphery);
                found = true;
            }
        CHECK(found);
    }
    SECTION("equal distance inside the CBD is toward the CBD")
    {
        bool found = false;
        for (const auto& e : g.edges())
            if (g.region(e.from) == Region::cbd && g.region(e.to) == Region::cbd) {
                CHECK(classify_direction(g, e.from, e.to) == Direction::toward_cbd);
                found = true;
            }
        CHECK(found);
    }
    SECTION("every edge of several grids is classified")
    {
        for (auto [a, s, r] : {std::tuple{6, 6, Rect{2, 2, 3, 3}}, std::tuple{9, 9, Rect{3, 3, 5, 5}},
                               std::tuple{5, 4, Rect{0, 0, 1, 1}}, std::tuple{7, 3, Rect{2, 0, 4, 2}}}) {
            const auto gg = build_grid(a, s, r);
            for (const auto& e : gg.edges())
                CHECK_NOTHROW(classify_direction(gg, e.from, e.to));
        }
    }
    CHECK_THROWS_AS(classify_direction(g, 0, 0), ContractViolation);
}

TEST_CASE("routing probabilities")
{
    const auto g = grid6();
    for (double gamma : {0.5, 1.0, 3.0, 5.0}) {
        const auto rt = routing_probabilities(g, gamma);
        for (ClusterId j = 0; j < g.size(); ++j) {
            double sum = 0.0, pd = -1.0, po = -1.0;
            for (const auto& [k, p] : rt.row(j)) {
                sum += p;
                CHECK(g.has_edge(j, k));
                (classify_direction(g, j, k) == Direction::toward_cbd ? pd : po) = p;
            }
            CHECK(sum == Approx(1.0).margin(1e-12));
            if (pd > 0.0 && po > 0.0)
                CHECK(pd / po == Approx(gamma).epsilon(1e-14));
        }
    }
    SECTION("one toward-CBD neighbour among three")
    {
        const double gamma = 3.0;
        const auto rt = routing_probabilities(g, gamma);
        bool found = false;
        for (ClusterId i = 0; i < g.size() && !found; ++i) {
            const auto& nb = g.out_neighbors(i);
            if (nb.size() != 3)
                continue;
            int toward = 0;
            for (ClusterId k : nb)
                toward += classify_direction(g, i, k) == Direction::toward_cbd;
            if (toward != 1)
                continue;
            found = true;
            for (ClusterId k : nb) {
                const double expect =
                    classify_direction(g, i, k) == Direction::toward_cbd ? gamma / (gamma + 2) : 1.0 / (gamma + 2);
                CHECK(rt.p(i, k) == Approx(expect).epsilon(1e-15));
            }
        }
        CHECK(found);
    }
    SECTION("gamma = 1 is uniform")
    {
        const auto rt = routing_probabilities(g, 1.0);
        for (ClusterId j = 0; j < g.size(); ++j)
            for (const auto& [k, p] : rt.row(j))
                CHECK(p == Approx(1.0 / double(g.out_neighbors(j).size())).epsilon(1e-15));
    }
    CHECK_THROWS_AS(routing_probabilities(g, 0.0), ConfigError);
    CHECK_THROWS_AS(routing_probabilities(g, -1.0), ConfigError);
}

TEST_CASE("routing fails on an isolated cluster")
{
    ClusterGraph g(2);
    g.set_region(0, Region::cbd);
    g.set_center(1, {1, 0});
    g.add_mobility_edge(0, 1);
    CHECK_THROWS_AS(routing_probabilities(g, 1.0), ConfigError);
}

TEST_CASE("grid symmetry carries over to routing")
{
    const auto g = grid6();
    const GridLayout L{6, 6};
    const auto rt = routing_probabilities(g, 3.0);
    for (auto map : {mirror_x, transpose}) {
        for (ClusterId j = 0; j < g.size(); ++j) {
            const ClusterId mj = map(L, j);
            CHECK(g.region(j) == g.region(mj));
            CHECK(g.out_neighbors(j).size() == g.out_neighbors(mj).size());
            for (ClusterId k : g.out_neighbors(j)) {
                REQUIRE(g.has_edge(mj, map(L, k)));
                CHECK(rt.p(j, k) == Approx(rt.p(mj, map(L, k))).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("blocking clusters")
{
    const auto g = build_grid(9, 9, {3, 3, 5, 5});
    const GridLayout L{9, 9};
    CHECK(block_clusters(g, {}).edges().size() == g.edges().size());

    std::set<ClusterId> R;
    for (int x : {3, 4}) {
        R.insert(L.cluster(x, 4, Axis::horizontal, true));
        R.insert(L.cluster(x, 4, Axis::horizontal, false));
    }
    const auto b = block_clusters(g, R);
    for (ClusterId k : R)
        CHECK(b.in_neighbors(k).empty());
    CHECK(b.comm_links().size() == g.comm_links().size());
    for (const auto& e : g.edges())
        CHECK(b.has_edge(e.from, e.to) == !R.count(e.to));

    std::set<ClusterId> all;
    for (ClusterId j = 0; j < g.size(); ++j)
        all.insert(j);
    CHECK(block_clusters(g, all).edge_count() == 0);
}

TEST_CASE("graph validation")
{
    ClusterGraph g(3);
    g.set_region(2, Region::virtual_exit);
    g.add_mobility_edge(0, 1);
    g.add_mobility_edge(1, 2);
    CHECK_NOTHROW(g.validate());
    g.set_beta(1, 2, 1.0);
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g.clear_comm();
    g.add_mobility_edge(2, 0);
    CHECK_THROWS_AS(g.validate(), ConfigError);
    CHECK_THROWS(g.add_mobility_edge(1, 1));
}

TEST_CASE("graph JSON round trip")
{
    GridOptions o;
    o.same_segment_beta = 2.5;
    const auto g = build_grid(4, 3, {1, 0, 2, 1}, o);
    const auto j = graph_to_json(g);
    const auto h = graph_from_json(j);
    CHECK(graph_to_json(h) == j);
    CHECK(h.size() == g.size());
    CHECK(h.edge_count() == g.edge_count());
    CHECK(h.beta(0, 1) == 2.5);
    CHECK_THROWS_AS(graph_from_json(nlohmann::json::parse(R"({"centers":[[0,0]],"mobility":[[0,3]]})")),
                    ConfigError);
    CHECK_THROWS_AS(graph_from_json(nlohmann::json::parse(R"({"mobility":[]})")), ConfigError);
}
