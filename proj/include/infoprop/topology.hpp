#pragma once

// Clustered road networks: cluster geometry, directed mobility edges,
// communication rates, CBD distances and gamma-biased routing.

#include "infoprop/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace infoprop {

using ClusterId = std::size_t;

enum class Region { cbd, periphery, study, virtual_entry, virtual_exit };

inline std::string_view to_string(Region r)
{
    switch (r) {
    case Region::cbd: return "cbd";
    case Region::periphery: return "periphery";
    case Region::study: return "study";
    case Region::virtual_entry: return "virtual_entry";
    case Region::virtual_exit: return "virtual_exit";
    }
    return "periphery";
}

inline Region region_from_string(std::string_view s)
{
    if (s == "cbd" || s == "CBD") return Region::cbd;
    if (s == "periphery" || s == "PERIPHERY") return Region::periphery;
    if (s == "study" || s == "STUDY") return Region::study;
    if (s == "virtual_entry" || s == "VIRTUAL_ENTRY" || s == "entry") return Region::virtual_entry;
    if (s == "virtual_exit" || s == "VIRTUAL_EXIT" || s == "exit") return Region::virtual_exit;
    throw ConfigError("unknown region tag '" + std::string(s) + "'");
}

inline bool is_virtual(Region r) { return r == Region::virtual_entry || r == Region::virtual_exit; }

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct MobilityEdge {
    ClusterId from;
    ClusterId to;
    friend bool operator==(const MobilityEdge&, const MobilityEdge&) = default;
};

struct CommLink {
    ClusterId from;
    ClusterId to;
    double beta;
};

/// Clusters with geometry and region tags, the directed mobility network
/// and the communication-rate numerators beta_jk (before division by N).
///
/// Adjacency is stored as sorted neighbor lists; iteration over edges and
/// communication links is always lexicographic in (from, to).
class ClusterGraph {
public:
    ClusterGraph() = default;

    explicit ClusterGraph(std::size_t clusters)
        : out_(clusters), in_(clusters), comm_(clusters), centers_(clusters),
          region_(clusters, Region::periphery), segment_(clusters)
    {
        for (std::size_t j = 0; j < clusters; ++j)
            segment_[j] = j;
    }

    std::size_t size() const noexcept { return out_.size(); }

    void add_mobility_edge(ClusterId j, ClusterId k)
    {
        check_id(j);
        check_id(k);
        if (j == k)
            throw ConfigError("mobility self-loop on cluster " + std::to_string(j));
        insert_sorted(out_[j], k);
        insert_sorted(in_[k], j);
    }

    void remove_mobility_edge(ClusterId j, ClusterId k)
    {
        check_id(j);
        check_id(k);
        erase_sorted(out_[j], k);
        erase_sorted(in_[k], j);
    }

    bool has_edge(ClusterId j, ClusterId k) const
    {
        if (j >= size() || k >= size())
            return false;
        return std::binary_search(out_[j].begin(), out_[j].end(), k);
    }

    const std::vector<ClusterId>& out_neighbors(ClusterId j) const { return out_.at(j); }
    const std::vector<ClusterId>& in_neighbors(ClusterId k) const { return in_.at(k); }

    std::vector<MobilityEdge> edges() const
    {
        std::vector<MobilityEdge> e;
        e.reserve(edge_count());
        for (ClusterId j = 0; j < size(); ++j)
            for (ClusterId k : out_[j])
                e.push_back({j, k});
        return e;
    }

    std::size_t edge_count() const
    {
        std::size_t n = 0;
        for (const auto& row : out_)
            n += row.size();
        return n;
    }

    /// beta == 0 removes the link.
    void set_beta(ClusterId j, ClusterId k, double beta)
    {
        check_id(j);
        check_id(k);
        if (!(beta >= 0.0) || !std::isfinite(beta))
            throw ConfigError("communication rate must be finite and non-negative");
        auto& row = comm_[j];
        auto it = std::lower_bound(row.begin(), row.end(), k,
                                   [](const auto& e, ClusterId id) { return e.first < id; });
        if (it != row.end() && it->first == k) {
            if (beta == 0.0)
                row.erase(it);
            else
                it->second = beta;
        } else if (beta > 0.0) {
            row.insert(it, {k, beta});
        }
    }

    double beta(ClusterId j, ClusterId k) const
    {
        const auto& row = comm_.at(j);
        auto it = std::lower_bound(row.begin(), row.end(), k,
                                   [](const auto& e, ClusterId id) { return e.first < id; });
        return (it != row.end() && it->first == k) ? it->second : 0.0;
    }

    const std::vector<std::pair<ClusterId, double>>& comm_row(ClusterId j) const { return comm_.at(j); }

    std::vector<CommLink> comm_links() const
    {
        std::vector<CommLink> links;
        for (ClusterId j = 0; j < size(); ++j)
            for (const auto& [k, b] : comm_[j])
                links.push_back({j, k, b});
        return links;
    }

    void clear_comm()
    {
        for (auto& row : comm_)
            row.clear();
    }

    Point center(ClusterId j) const { return centers_.at(j); }
    void set_center(ClusterId j, Point p) { centers_.at(j) = p; }

    Region region(ClusterId j) const { return region_.at(j); }
    void set_region(ClusterId j, Region r) { region_.at(j) = r; }

    std::size_t segment(ClusterId j) const { return segment_.at(j); }
    void set_segment(ClusterId j, std::size_t s) { segment_.at(j) = s; }

    std::vector<ClusterId> clusters_in(Region r) const
    {
        std::vector<ClusterId> ids;
        for (ClusterId j = 0; j < size(); ++j)
            if (region_[j] == r)
                ids.push_back(j);
        return ids;
    }

    bool is_open() const
    {
        return std::any_of(region_.begin(), region_.end(), [](Region r) { return is_virtual(r); });
    }

    /// Structural invariants: no self loops, virtual clusters isolated from
    /// communication, exits absorbing, entries not fed from the study area.
    void validate() const
    {
        for (ClusterId j = 0; j < size(); ++j) {
            if (std::binary_search(out_[j].begin(), out_[j].end(), j))
                throw ConfigError("self-loop on cluster " + std::to_string(j));
            if (region_[j] == Region::virtual_exit && !out_[j].empty())
                throw ConfigError("virtual exit cluster " + std::to_string(j) + " has outgoing edges");
            if (region_[j] == Region::virtual_entry)
                for (ClusterId i : in_[j])
                    if (region_[i] == Region::study)
                        throw ConfigError("virtual entry cluster " + std::to_string(j) +
                                          " is fed from a study cluster");
            for (const auto& [k, b] : comm_[j])
                if (is_virtual(region_[j]) || is_virtual(region_[k]))
                    throw ConfigError("communication link touches a virtual cluster");
        }
    }

private:
    void check_id(ClusterId j) const
    {
        if (j >= size())
            throw ContractViolation("cluster id " + std::to_string(j) + " out of range");
    }

    static void insert_sorted(std::vector<ClusterId>& v, ClusterId id)
    {
        auto it = std::lower_bound(v.begin(), v.end(), id);
        if (it == v.end() || *it != id)
            v.insert(it, id);
    }

    static void erase_sorted(std::vector<ClusterId>& v, ClusterId id)
    {
        auto it = std::lower_bound(v.begin(), v.end(), id);
        if (it != v.end() && *it == id)
            v.erase(it);
    }

    std::vector<std::vector<ClusterId>> out_;
    std::vector<std::vector<ClusterId>> in_;
    std::vector<std::vector<std::pair<ClusterId, double>>> comm_;
    std::vector<Point> centers_;
    std::vector<Region> region_;
    std::vector<std::size_t> segment_;
};

// ---------------------------------------------------------------------------
// Grid and chain builders

/// Axis-aligned rectangle in grid coordinates (intersection units).
struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct GridOptions {
    /// Segments lying on the rectangle boundary count as inside.
    bool cbd_inclusive = true;
    bool allow_u_turns = false;
    /// beta for every same-segment pair (including j == k); 0 leaves the
    /// communication network empty.
    double same_segment_beta = 0.0;
};

enum class Axis { horizontal, vertical };

/// Index arithmetic for an avenues x streets grid. Avenues are the vertical
/// lines x = 0..avenues-1, streets the horizontal lines y = 0..streets-1.
/// Horizontal segments come first; each segment owns clusters 2s (travel in
/// the increasing-coordinate direction) and 2s+1 (the opposite direction).
struct GridLayout {
    int avenues = 0;
    int streets = 0;

    std::size_t horizontal_segments() const { return std::size_t(streets) * std::size_t(avenues - 1); }
    std::size_t vertical_segments() const { return std::size_t(avenues) * std::size_t(streets - 1); }
    std::size_t segment_count() const { return horizontal_segments() + vertical_segments(); }
    std::size_t cluster_count() const { return 2 * segment_count(); }

    /// Segment starting at intersection (x, y) along the given axis.
    std::size_t segment(int x, int y, Axis axis) const
    {
        if (axis == Axis::horizontal) {
            if (x < 0 || x >= avenues - 1 || y < 0 || y >= streets)
                throw ContractViolation("horizontal segment out of grid");
            return std::size_t(y) * std::size_t(avenues - 1) + std::size_t(x);
        }
        if (x < 0 || x >= avenues || y < 0 || y >= streets - 1)
            throw ContractViolation("vertical segment out of grid");
        return horizontal_segments() + std::size_t(y) * std::size_t(avenues) + std::size_t(x);
    }

    ClusterId cluster(int x, int y, Axis axis, bool forward) const
    {
        return 2 * segment(x, y, axis) + (forward ? 0 : 1);
    }

    struct SegmentGeometry {
        int x0, y0, x1, y1;
    };

    SegmentGeometry geometry(std::size_t s) const
    {
        if (s < horizontal_segments()) {
            int y = int(s / std::size_t(avenues - 1));
            int x = int(s % std::size_t(avenues - 1));
            return {x, y, x + 1, y};
        }
        s -= horizontal_segments();
        int y = int(s / std::size_t(avenues));
        int x = int(s % std::size_t(avenues));
        return {x, y, x, y + 1};
    }

    /// Intersection a cluster travels from / into.
    std::pair<int, int> tail(ClusterId c) const
    {
        auto g = geometry(c / 2);
        return (c % 2 == 0) ? std::pair{g.x0, g.y0} : std::pair{g.x1, g.y1};
    }
    std::pair<int, int> head(ClusterId c) const
    {
        auto g = geometry(c / 2);
        return (c % 2 == 0) ? std::pair{g.x1, g.y1} : std::pair{g.x0, g.y0};
    }
};

inline bool segment_in_rect(const GridLayout::SegmentGeometry& s, const Rect& r, bool inclusive)
{
    auto inside = [&](int x, int y) { return x >= r.x0 && x <= r.x1 && y >= r.y0 && y <= r.y1; };
    if (!inside(s.x0, s.y0) || !inside(s.x1, s.y1))
        return false;
    if (inclusive)
        return true;
    // exclusive: drop segments running along the rectangle boundary
    if (s.y0 == s.y1 && (s.y0 == r.y0 || s.y0 == r.y1))
        return false;
    if (s.x0 == s.x1 && (s.x0 == r.x0 || s.x0 == r.x1))
        return false;
    return true;
}

/// Every segment between adjacent intersections becomes two directional
/// clusters; a cluster feeds every cluster departing its downstream
/// intersection (U-turns excluded unless allowed).
inline ClusterGraph build_grid(int avenues, int streets, Rect cbd, const GridOptions& opt = {})
{
    if (avenues < 2 || streets < 2)
        throw ConfigError("grid needs at least 2 avenues and 2 streets");
    if (cbd.x0 > cbd.x1 || cbd.y0 > cbd.y1 || cbd.x0 < 0 || cbd.y0 < 0 || cbd.x1 > avenues - 1 ||
        cbd.y1 > streets - 1)
        throw ConfigError("CBD rectangle lies outside the grid");

    GridLayout layout{avenues, streets};
    const std::size_t J = layout.cluster_count();
    ClusterGraph g(J);

    // departing clusters per intersection
    std::vector<std::vector<ClusterId>> departing(std::size_t(avenues) * std::size_t(streets));
    auto node = [&](std::pair<int, int> p) { return std::size_t(p.second) * std::size_t(avenues) + std::size_t(p.first); };

    for (ClusterId c = 0; c < J; ++c) {
        auto geo = layout.geometry(c / 2);
        g.set_center(c, {0.5 * (geo.x0 + geo.x1), 0.5 * (geo.y0 + geo.y1)});
        g.set_segment(c, c / 2);
        g.set_region(c, segment_in_rect(geo, cbd, opt.cbd_inclusive) ? Region::cbd : Region::periphery);
        departing[node(layout.tail(c))].push_back(c);
    }
    for (ClusterId c = 0; c < J; ++c)
        for (ClusterId d : departing[node(layout.head(c))])
            if (opt.allow_u_turns || d / 2 != c / 2)
                g.add_mobility_edge(c, d);

    if (opt.same_segment_beta > 0.0)
        for (ClusterId c = 0; c < J; ++c) {
            g.set_beta(c, c, opt.same_segment_beta);
            g.set_beta(c, c ^ 1u, opt.same_segment_beta);
        }
    return g;
}

/// One-dimensional two-way road of `clusters` directional clusters
/// (clusters/2 segments) with U-turns at both ends.
inline ClusterGraph build_chain(std::size_t clusters, double same_segment_beta = 0.0)
{
    if (clusters < 2 || clusters % 2 != 0)
        throw ConfigError("chain needs an even number of clusters >= 2");
    const std::size_t segments = clusters / 2;
    ClusterGraph g(clusters);
    for (std::size_t s = 0; s < segments; ++s) {
        const ClusterId fwd = 2 * s, bwd = 2 * s + 1;
        for (ClusterId c : {fwd, bwd}) {
            g.set_center(c, {double(s) + 0.5, 0.0});
            g.set_segment(c, s);
            g.set_region(c, Region::periphery);
        }
        g.add_mobility_edge(fwd, s + 1 < segments ? 2 * (s + 1) : bwd);
        g.add_mobility_edge(bwd, s > 0 ? 2 * (s - 1) + 1 : fwd);
        if (same_segment_beta > 0.0) {
            g.set_beta(fwd, fwd, same_segment_beta);
            g.set_beta(fwd, bwd, same_segment_beta);
            g.set_beta(bwd, fwd, same_segment_beta);
            g.set_beta(bwd, bwd, same_segment_beta);
        }
    }
    return g;
}

/// Sets beta for every pair of clusters sharing a segment (j == k included).
inline void set_same_segment_beta(ClusterGraph& g, double beta)
{
    g.clear_comm();
    if (beta == 0.0)
        return;
    std::vector<std::vector<ClusterId>> by_segment;
    for (ClusterId j = 0; j < g.size(); ++j) {
        if (is_virtual(g.region(j)))
            continue;
        if (g.segment(j) >= by_segment.size())
            by_segment.resize(g.segment(j) + 1);
        by_segment[g.segment(j)].push_back(j);
    }
    for (const auto& members : by_segment)
        for (ClusterId j : members)
            for (ClusterId k : members)
                g.set_beta(j, k, beta);
}

// ---------------------------------------------------------------------------
// Distances and direction classification

/// Squared distance from every cluster center to the nearest CBD center.
/// Squared values keep grid comparisons exact.
inline std::vector<double> cbd_squared_distances(const ClusterGraph& g)
{
    std::vector<ClusterId> cbd = g.clusters_in(Region::cbd);
    if (cbd.empty())
        throw ConfigError("graph has no CBD clusters");
    std::vector<double> d(g.size(), std::numeric_limits<double>::infinity());
    for (ClusterId x = 0; x < g.size(); ++x) {
        const Point px = g.center(x);
        for (ClusterId y : cbd) {
            const Point py = g.center(y);
            const double dx = px.x - py.x, dy = px.y - py.y;
            d[x] = std::min(d[x], dx * dx + dy * dy);
        }
    }
    return d;
}

inline double distance_to_cbd(const ClusterGraph& g, ClusterId x)
{
    if (x >= g.size())
        throw ContractViolation("cluster id out of range");
    return std::sqrt(cbd_squared_distances(g)[x]);
}

enum class Direction { toward_cbd, toward_periphery };

namespace detail {

inline Direction classify(const ClusterGraph& g, const std::vector<double>& sq, ClusterId j, ClusterId k)
{
    if (sq[j] > sq[k])
        return Direction::toward_cbd;
    if (sq[j] < sq[k])
        return Direction::toward_periphery;
    const bool jd = g.region(j) == Region::cbd, kd = g.region(k) == Region::cbd;
    if (jd && kd)
        return Direction::toward_cbd;
    if (!jd && !kd)
        return Direction::toward_periphery;
    // d(x, D) == 0 iff x in D, so equal distances cannot mix regions
    throw std::logic_error("equal CBD distance across regions for edge " + std::to_string(j) + "->" +
                           std::to_string(k));
}

} // namespace detail

inline Direction classify_direction(const ClusterGraph& g, ClusterId j, ClusterId k)
{
    if (!g.has_edge(j, k))
        throw ContractViolation("classify_direction requires a mobility edge");
    return detail::classify(g, cbd_squared_distances(g), j, k);
}

// ---------------------------------------------------------------------------
// Routing

/// p_jk for every mobility edge; rows align with ClusterGraph::out_neighbors.
class RoutingTable {
public:
    RoutingTable() = default;
    RoutingTable(double gamma, std::vector<std::vector<std::pair<ClusterId, double>>> rows)
        : gamma_(gamma), rows_(std::move(rows))
    {
    }

    double gamma() const noexcept { return gamma_; }
    std::size_t size() const noexcept { return rows_.size(); }

    const std::vector<std::pair<ClusterId, double>>& row(ClusterId j) const { return rows_.at(j); }

    double p(ClusterId j, ClusterId k) const
    {
        for (const auto& [id, pr] : rows_.at(j))
            if (id == k)
                return pr;
        return 0.0;
    }

    /// Uniform choice among out-neighbors; clusters without edges keep an
    /// empty row.
    static RoutingTable uniform(const ClusterGraph& g)
    {
        std::vector<std::vector<std::pair<ClusterId, double>>> rows(g.size());
        for (ClusterId j = 0; j < g.size(); ++j) {
            const auto& nb = g.out_neighbors(j);
            for (ClusterId k : nb)
                rows[j].push_back({k, 1.0 / double(nb.size())});
        }
        return RoutingTable(1.0, std::move(rows));
    }

private:
    double gamma_ = 1.0;
    std::vector<std::vector<std::pair<ClusterId, double>>> rows_;
};

/// gamma-biased routing: toward-CBD neighbors get gamma times the
/// probability of toward-periphery neighbors, rows normalised to 1.
inline RoutingTable routing_probabilities(const ClusterGraph& g, double gamma)
{
    if (!(gamma > 0.0) || !std::isfinite(gamma))
        throw ConfigError("gamma must be positive");
    for (ClusterId j = 0; j < g.size(); ++j)
        if (g.out_neighbors(j).empty() && g.region(j) != Region::virtual_exit)
            throw ConfigError("cluster " + std::to_string(j) + " has no outgoing mobility edge");

    if (g.clusters_in(Region::cbd).empty()) {
        if (gamma != 1.0)
            throw ConfigError("gamma != 1 requires CBD clusters");
        return RoutingTable::uniform(g);
    }

    const auto sq = cbd_squared_distances(g);
    std::vector<std::vector<std::pair<ClusterId, double>>> rows(g.size());
    for (ClusterId j = 0; j < g.size(); ++j) {
        const auto& nb = g.out_neighbors(j);
        if (nb.empty())
            continue;
        std::vector<Direction> dir;
        dir.reserve(nb.size());
        std::size_t toward = 0;
        for (ClusterId k : nb) {
            dir.push_back(detail::classify(g, sq, j, k));
            toward += dir.back() == Direction::toward_cbd;
        }
        const double p_o = 1.0 / (double(toward) * gamma + double(nb.size() - toward));
        const double p_d = gamma * p_o;
        for (std::size_t i = 0; i < nb.size(); ++i)
            rows[j].push_back({nb[i], dir[i] == Direction::toward_cbd ? p_d : p_o});
    }
    return RoutingTable(gamma, std::move(rows));
}

/// Copy of g in which no vehicle may enter a cluster of `blocked`.
/// Communication is untouched; routing must be recomputed afterwards.
inline ClusterGraph block_clusters(const ClusterGraph& g, const std::set<ClusterId>& blocked)
{
    ClusterGraph out = g;
    for (ClusterId k : blocked) {
        if (k >= g.size())
            throw ContractViolation("blocked cluster id out of range");
        for (ClusterId j : g.in_neighbors(k))
            out.remove_mobility_edge(j, k);
    }
    return out;
}

} // namespace infoprop
