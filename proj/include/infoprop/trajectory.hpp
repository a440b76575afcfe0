#pragma once

// Vehicle trajectories: CSV ingestion, cluster assignment, rate extraction,
// synthetic generation and replay with superimposed communication.

#include "infoprop/ctmc.hpp"
#include "infoprop/error.hpp"
#include "infoprop/parallel.hpp"
#include "infoprop/random.hpp"
#include "infoprop/rates.hpp"
#include "infoprop/state.hpp"
#include "infoprop/topology.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace infoprop {

struct TrajectoryRecord {
    std::int64_t vehicle_id = 0;
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    /// pre-assigned cluster, or -1
    std::int64_t cluster = -1;
};

/// Column names for the trajectory CSV, with a time scale applied on read
/// (e.g. 0.001 for NGSIM millisecond timestamps).
struct ColumnMapping {
    std::string vehicle_id = "vehicle_id";
    std::string t = "t";
    std::string x = "x";
    std::string y = "y";
    std::string cluster = "cluster";
    double time_scale = 1.0;
    double space_scale = 1.0;

    static ColumnMapping from_json(const nlohmann::json& j)
    {
        ColumnMapping m;
        m.vehicle_id = j.value("vehicle_id", m.vehicle_id);
        m.t = j.value("t", m.t);
        m.x = j.value("x", m.x);
        m.y = j.value("y", m.y);
        m.cluster = j.value("cluster", m.cluster);
        m.time_scale = j.value("time_scale", m.time_scale);
        m.space_scale = j.value("space_scale", m.space_scale);
        return m;
    }
};

inline std::vector<TrajectoryRecord> read_trajectory_csv(std::istream& is, const ColumnMapping& map = {})
{
    std::string line;
    if (!std::getline(is, line))
        return {};
    const auto header = split_csv_line(line);
    auto column = [&](const std::string& name) -> long {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : long(it - header.begin());
    };
    const long cv = column(map.vehicle_id), ct = column(map.t), cx = column(map.x), cy = column(map.y),
               cc = column(map.cluster);
    if (cv < 0 || ct < 0)
        throw DataError("trajectory CSV lacks vehicle id or time column");
    const bool has_xy = cx >= 0 && cy >= 0;
    if (!has_xy && cc < 0)
        throw DataError("trajectory CSV needs x,y or cluster columns");

    std::vector<TrajectoryRecord> out;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty() || line == "\r")
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("trajectory row " + std::to_string(row) + " has wrong column count");
        TrajectoryRecord r;
        r.vehicle_id = std::int64_t(parse_double(cells[std::size_t(cv)]));
        r.t = parse_double(cells[std::size_t(ct)]) * map.time_scale;
        if (has_xy) {
            r.x = parse_double(cells[std::size_t(cx)]) * map.space_scale;
            r.y = parse_double(cells[std::size_t(cy)]) * map.space_scale;
        }
        if (cc >= 0 && !cells[std::size_t(cc)].empty())
            r.cluster = std::int64_t(parse_double(cells[std::size_t(cc)]));
        out.push_back(r);
    }
    return out;
}

inline std::vector<TrajectoryRecord> read_trajectory_csv(const std::string& path, const ColumnMapping& map = {})
{
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot read " + path);
    return read_trajectory_csv(is, map);
}

// ---------------------------------------------------------------------------
// Regions

struct ClusterPolygon {
    ClusterId cluster;
    std::vector<Point> points;
};

inline bool point_in_polygon(const std::vector<Point>& poly, Point p)
{
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Point a = poly[i], b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xc = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < xc)
                inside = !inside;
        }
    }
    return inside;
}

/// Distance from p to the polygon boundary.
inline double boundary_distance(const std::vector<Point>& poly, Point p)
{
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Point a = poly[j], b = poly[i];
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        double u = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        const double qx = a.x + u * dx - p.x, qy = a.y + u * dy - p.y;
        best = std::min(best, std::sqrt(qx * qx + qy * qy));
    }
    return best;
}

/// Cluster regions as polygons. Roads given as longitudinal breakpoints are
/// converted to rectangles.
struct RegionMap {
    std::vector<ClusterPolygon> polygons;

    /// First polygon containing p, or nullopt.
    std::optional<std::size_t> locate(Point p) const
    {
        for (std::size_t i = 0; i < polygons.size(); ++i)
            if (point_in_polygon(polygons[i].points, p))
                return i;
        return std::nullopt;
    }

    /// JSON: {"polygons":[{"cluster":c,"points":[[x,y],...]}],
    ///        "roads":[{"axis":"x"|"y","lateral":[lo,hi],
    ///                  "breakpoints":[b0,...,bm],"clusters":[c1,...,cm]}]}
    static RegionMap from_json(const nlohmann::json& j)
    {
        RegionMap m;
        for (const auto& p : j.value("polygons", nlohmann::json::array())) {
            ClusterPolygon poly;
            poly.cluster = p.at("cluster").get<ClusterId>();
            for (const auto& pt : p.at("points"))
                poly.points.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
            if (poly.points.size() < 3)
                throw ConfigError("region polygon needs at least 3 points");
            m.polygons.push_back(std::move(poly));
        }
        for (const auto& r : j.value("roads", nlohmann::json::array())) {
            const std::string axis = r.value("axis", "x");
            const auto lateral = r.at("lateral").get<std::vector<double>>();
            const auto br = r.at("breakpoints").get<std::vector<double>>();
            const auto cl = r.at("clusters").get<std::vector<ClusterId>>();
            if (lateral.size() != 2 || br.size() != cl.size() + 1)
                throw ConfigError("road needs 2 lateral bounds and one more breakpoint than clusters");
            for (std::size_t i = 0; i < cl.size(); ++i) {
                const double a = std::min(br[i], br[i + 1]), b = std::max(br[i], br[i + 1]);
                ClusterPolygon poly{cl[i], {}};
                if (axis == "x")
                    poly.points = {{a, lateral[0]}, {b, lateral[0]}, {b, lateral[1]}, {a, lateral[1]}};
                else
                    poly.points = {{lateral[0], a}, {lateral[1], a}, {lateral[1], b}, {lateral[0], b}};
                m.polygons.push_back(std::move(poly));
            }
        }
        return m;
    }
};

// ---------------------------------------------------------------------------
// Cluster sequences

struct Visit {
    ClusterId cluster;
    double enter;
    double leave;
};

struct ClusterSequence {
    std::int64_t vehicle_id = 0;
    std::vector<Visit> visits;
    /// final visit truncated by the end of observation (not in an exit)
    bool censored = false;
};

struct AssignOptions {
    /// a cluster change needs the position this far inside the new region
    double hysteresis = 0.5;
    /// a gap longer than this between samples of one vehicle id starts a
    /// new vehicle
    double reentry_gap = std::numeric_limits<double>::infinity();
};

struct AssignResult {
    std::vector<ClusterSequence> sequences;
    std::size_t flagged_records = 0;
    std::size_t dropped_vehicles = 0;
};

namespace detail {

inline void finish_sequence(ClusterSequence& seq, const ClusterGraph* g)
{
    if (seq.visits.empty())
        return;
    const ClusterId last = seq.visits.back().cluster;
    seq.censored = !(g && last < g->size() && g->region(last) == Region::virtual_exit);
}

inline bool touches_study(const ClusterSequence& seq, const ClusterGraph* g)
{
    if (!g)
        return !seq.visits.empty();
    for (const auto& v : seq.visits)
        if (v.cluster < g->size() && !is_virtual(g->region(v.cluster)))
            return true;
    return false;
}

} // namespace detail

/// Maps samples to clusters and collapses them into visits. A visit ends at
/// the time of the first sample registered in the next cluster; the last
/// visit ends at the vehicle's last sample. With a graph, vehicles that
/// never enter a non-virtual cluster are dropped and final visits outside
/// exit clusters are marked censored.
inline AssignResult assign_clusters(std::vector<TrajectoryRecord> records, const RegionMap& regions,
                                    const ClusterGraph* g = nullptr, const AssignOptions& opt = {})
{
    AssignResult out;
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.vehicle_id != b.vehicle_id ? a.vehicle_id < b.vehicle_id : a.t < b.t;
    });
    std::int64_t next_fresh_id = 0;
    for (const auto& r : records)
        next_fresh_id = std::max(next_fresh_id, r.vehicle_id + 1);

    std::size_t i = 0;
    while (i < records.size()) {
        std::size_t end = i;
        while (end < records.size() && records[end].vehicle_id == records[i].vehicle_id)
            ++end;

        ClusterSequence seq;
        seq.vehicle_id = records[i].vehicle_id;
        double last_t = -std::numeric_limits<double>::infinity();
        std::optional<ClusterId> current;
        auto flush = [&] {
            if (!seq.visits.empty()) {
                seq.visits.back().leave = last_t;
                detail::finish_sequence(seq, g);
                if (detail::touches_study(seq, g))
                    out.sequences.push_back(std::move(seq));
                else
                    ++out.dropped_vehicles;
            }
            seq = ClusterSequence{};
            current.reset();
        };

        for (std::size_t r = i; r < end; ++r) {
            const auto& rec = records[r];
            if (r > i && rec.t <= records[r - 1].t)
                throw DataError("vehicle " + std::to_string(rec.vehicle_id) + " has non-increasing timestamps");
            if (r > i && rec.t - last_t > opt.reentry_gap && !seq.visits.empty()) {
                flush();
                seq.vehicle_id = next_fresh_id++;
            }

            ClusterId c;
            double depth = std::numeric_limits<double>::infinity();
            if (rec.cluster >= 0) {
                c = ClusterId(rec.cluster);
            } else {
                const auto idx = regions.locate({rec.x, rec.y});
                if (!idx) {
                    ++out.flagged_records;
                    continue;
                }
                c = regions.polygons[*idx].cluster;
                depth = boundary_distance(regions.polygons[*idx].points, {rec.x, rec.y});
            }
            if (!current) {
                current = c;
                seq.visits.push_back({c, rec.t, rec.t});
            } else if (c != *current && depth >= opt.hysteresis) {
                seq.visits.back().leave = rec.t;
                seq.visits.push_back({c, rec.t, rec.t});
                current = c;
            }
            last_t = rec.t;
        }
        flush();
        i = end;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rate extraction

struct RateTable {
    std::size_t clusters = 0;
    /// 1 / mean completed sojourn; NaN where undefined
    std::vector<double> lambda;
    std::map<EdgeKey, double> p;
    std::map<EdgeKey, double> rates;
    /// lambda~_ij: entries into j from entry cluster i per second
    std::map<EdgeKey, double> entry;
    std::map<EdgeKey, std::size_t> entry_counts;
    std::map<EdgeKey, std::size_t> departures;
    std::vector<std::size_t> completed_visits;
    std::vector<ClusterId> undefined;
    double duration = 0.0;
    std::size_t vehicles = 0;

    MobilityTable to_mobility_table(double nominal_n = 0.0, EntryInflow inflow = EntryInflow::constant) const
    {
        MobilityTable t;
        t.rates = rates;
        t.entry = entry;
        t.nominal_n = nominal_n > 0.0 ? nominal_n : double(vehicles);
        t.inflow = inflow;
        return t;
    }
};

/// observation_duration <= 0 uses the span of all visit times.
inline RateTable extract_rates(const std::vector<ClusterSequence>& sequences, const ClusterGraph& g,
                               double observation_duration = 0.0)
{
    const std::size_t J = g.size();
    RateTable rt;
    rt.clusters = J;
    rt.lambda.assign(J, std::numeric_limits<double>::quiet_NaN());
    rt.completed_visits.assign(J, 0);
    rt.vehicles = sequences.size();
    std::vector<double> sojourn_sum(J, 0.0);
    std::vector<std::size_t> departures_from(J, 0);
    double t_min = std::numeric_limits<double>::infinity(), t_max = -t_min;

    auto check = [&](ClusterId c) {
        if (c >= J)
            throw DataError("cluster id " + std::to_string(c) + " outside the graph");
    };

    for (const auto& seq : sequences) {
        if (seq.visits.empty())
            continue;
        t_min = std::min(t_min, seq.visits.front().enter);
        t_max = std::max(t_max, seq.visits.back().leave);
        const ClusterId first = seq.visits.front().cluster;
        check(first);
        // a vehicle first seen inside the study area entered through an
        // entry cluster feeding that cluster, if the graph has one
        if (g.region(first) != Region::virtual_entry) {
            for (ClusterId i : g.in_neighbors(first))
                if (g.region(i) == Region::virtual_entry) {
                    ++rt.entry_counts[{i, first}];
                    break;
                }
        }
        for (std::size_t v = 0; v + 1 < seq.visits.size(); ++v) {
            const ClusterId a = seq.visits[v].cluster, b = seq.visits[v + 1].cluster;
            check(a);
            check(b);
            if (g.region(a) == Region::virtual_entry) {
                ++rt.entry_counts[{a, b}];
                continue;
            }
            sojourn_sum[a] += seq.visits[v].leave - seq.visits[v].enter;
            ++rt.completed_visits[a];
            ++rt.departures[{a, b}];
            ++departures_from[a];
        }
    }

    rt.duration = observation_duration > 0.0 ? observation_duration : (t_max > t_min ? t_max - t_min : 0.0);
    for (ClusterId j = 0; j < J; ++j) {
        const Region r = g.region(j);
        if (is_virtual(r))
            continue;
        if (rt.completed_visits[j] == 0 || !(sojourn_sum[j] > 0.0)) {
            rt.undefined.push_back(j);
            continue;
        }
        rt.lambda[j] = double(rt.completed_visits[j]) / sojourn_sum[j];
    }
    for (const auto& [edge, count] : rt.departures) {
        const double p = double(count) / double(departures_from[edge.first]);
        rt.p[edge] = p;
        if (std::isfinite(rt.lambda[edge.first]))
            rt.rates[edge] = rt.lambda[edge.first] * p;
    }
    if (rt.duration > 0.0)
        for (const auto& [edge, count] : rt.entry_counts)
            rt.entry[edge] = double(count) / rt.duration;
    return rt;
}

inline nlohmann::json rate_table_to_json(const RateTable& rt)
{
    nlohmann::json j;
    nlohmann::json lam = nlohmann::json::array();
    for (double v : rt.lambda)
        lam.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
    j["lambda"] = lam;
    nlohmann::json p = nlohmann::json::array();
    for (ClusterId a = 0; a < rt.clusters; ++a) {
        std::vector<double> row(rt.clusters, 0.0);
        for (const auto& [edge, v] : rt.p)
            if (edge.first == a)
                row[edge.second] = v;
        p.push_back(row);
    }
    j["p"] = p;
    nlohmann::json entry = nlohmann::json::array();
    for (const auto& [edge, v] : rt.entry)
        entry.push_back({edge.first, edge.second, v});
    j["entry"] = entry;
    j["duration"] = rt.duration;
    j["vehicles"] = rt.vehicles;
    j["undefined"] = rt.undefined;
    return j;
}

inline RateTable rate_table_from_json(const nlohmann::json& j)
{
    RateTable rt;
    const auto& lam = j.at("lambda");
    rt.clusters = lam.size();
    for (const auto& v : lam)
        rt.lambda.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    const auto& p = j.at("p");
    if (p.size() != rt.clusters)
        throw ConfigError("rate table p must be J x J");
    for (ClusterId a = 0; a < rt.clusters; ++a) {
        if (p[a].size() != rt.clusters)
            throw ConfigError("rate table p must be J x J");
        for (ClusterId b = 0; b < rt.clusters; ++b) {
            const double v = p[a][b].get<double>();
            if (v < 0.0)
                throw ConfigError("negative routing fraction");
            if (v > 0.0) {
                rt.p[{a, b}] = v;
                if (std::isfinite(rt.lambda[a]))
                    rt.rates[{a, b}] = rt.lambda[a] * v;
            }
        }
    }
    for (const auto& e : j.value("entry", nlohmann::json::array()))
        rt.entry[{e.at(0).get<ClusterId>(), e.at(1).get<ClusterId>()}] = e.at(2).get<double>();
    rt.duration = j.value("duration", 0.0);
    rt.vehicles = j.value("vehicles", std::size_t{0});
    rt.completed_visits.assign(rt.clusters, 0);
    return rt;
}

// ---------------------------------------------------------------------------
// Synthetic trajectories

struct SynthOptions {
    /// closed systems: vehicles per non-virtual cluster at t=0 (size J);
    /// empty spreads N round-robin over non-virtual clusters
    std::vector<std::int64_t> initial;
};

namespace detail {

// Largest-remainder split of `total` proportional to `weights`.
inline std::vector<std::int64_t> apportion(std::int64_t total, const std::vector<double>& weights)
{
    std::vector<std::int64_t> out(weights.size(), 0);
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(wsum > 0.0) || total <= 0)
        return out;
    std::vector<std::pair<double, std::size_t>> rem;
    std::int64_t used = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = double(total) * weights[i] / wsum;
        out[i] = std::int64_t(std::floor(exact));
        used += out[i];
        rem.push_back({exact - double(out[i]), i});
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; used < total; ++r, ++used)
        ++out[rem[r % rem.size()].second];
    return out;
}

} // namespace detail

/// Pure mobility without communication. State-independent laws move each
/// vehicle independently: exponential sojourn with rate sum_k lambda_ck,
/// next cluster with probability lambda_ck / sum. In open systems the N
/// vehicles arrive through the entry edges, split in proportion to the
/// entry rates, at sorted uniform times on [0, horizon) (a Poisson process
/// conditioned on its count). The density-dependent law couples vehicles
/// and is simulated jointly with the event engine.
inline std::vector<ClusterSequence> synth_trajectories(const ClusterGraph& g, const MobilityModel& model,
                                                       const RoutingTable& routing, std::int64_t N, double horizon,
                                                       std::uint64_t seed, const SynthOptions& opt = {})
{
    if (N < 0 || !(horizon > 0.0))
        throw ConfigError("synth_trajectories needs N >= 0 and horizon > 0");
    model.validate();
    const std::size_t J = g.size();
    Rng rng(seed);
    std::vector<ClusterSequence> out;

    // start cluster and start time of every vehicle
    std::vector<std::pair<ClusterId, double>> starts;
    const auto entries = g.clusters_in(Region::virtual_entry);
    if (!entries.empty()) {
        if (model.law != RateLaw::tabulated)
            throw ConfigError("open systems need a tabulated model with entry rates");
        std::vector<EdgeKey> edges;
        std::vector<double> w;
        for (const auto& [edge, rate] : model.table->entry) {
            edges.push_back(edge);
            w.push_back(rate);
        }
        const auto counts = detail::apportion(N, w);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            std::vector<double> times(std::size_t(counts[e]));
            for (auto& t : times)
                t = rng.uniform() * horizon;
            std::sort(times.begin(), times.end());
            for (double t : times)
                starts.push_back({edges[e].second, t});
            // remember the entry cluster through the vehicle id order below
            for (std::size_t v = starts.size() - times.size(); v < starts.size(); ++v) {
                ClusterSequence seq;
                seq.vehicle_id = std::int64_t(v);
                seq.visits.push_back({edges[e].first, starts[v].second, starts[v].second});
                out.push_back(std::move(seq));
            }
        }
    } else {
        std::vector<std::int64_t> initial = opt.initial;
        if (initial.empty()) {
            std::vector<ClusterId> study;
            for (ClusterId j = 0; j < J; ++j)
                if (!is_virtual(g.region(j)))
                    study.push_back(j);
            initial.assign(J, 0);
            for (std::int64_t v = 0; v < N; ++v)
                ++initial[study[std::size_t(v) % study.size()]];
        }
        if (initial.size() != J)
            throw ConfigError("initial placement has the wrong size");
        for (ClusterId j = 0; j < J; ++j)
            for (std::int64_t c = 0; c < initial[j]; ++c) {
                starts.push_back({j, 0.0});
                ClusterSequence seq;
                seq.vehicle_id = std::int64_t(out.size());
                out.push_back(std::move(seq));
            }
    }

    if (model.law != RateLaw::density_dependent) {
        std::vector<std::vector<std::pair<ClusterId, double>>> out_rates(J);
        std::vector<double> total(J, 0.0);
        for (ClusterId j = 0; j < J; ++j) {
            if (g.region(j) == Region::virtual_entry)
                continue;
            for (ClusterId k : g.out_neighbors(j)) {
                const double r = evaluate_rate(edge_rate_term(model, routing, g, j, k), model, 0.0, 0.0);
                if (r > 0.0) {
                    out_rates[j].push_back({k, r});
                    total[j] += r;
                }
            }
        }
        for (std::size_t v = 0; v < out.size(); ++v) {
            ClusterSequence& seq = out[v];
            ClusterId c = starts[v].first;
            double t = starts[v].second;
            for (;;) {
                if (!(total[c] > 0.0)) {
                    seq.visits.push_back({c, t, g.region(c) == Region::virtual_exit ? t : horizon});
                    break;
                }
                const double stay = rng.exponential(total[c]);
                if (t + stay >= horizon) {
                    seq.visits.push_back({c, t, horizon});
                    break;
                }
                double target = rng.uniform() * total[c];
                ClusterId next = out_rates[c].back().first;
                for (const auto& [k, r] : out_rates[c]) {
                    if (target < r) {
                        next = k;
                        break;
                    }
                    target -= r;
                }
                seq.visits.push_back({c, t, t + stay});
                t += stay;
                c = next;
            }
            detail::finish_sequence(seq, &g);
        }
        return out;
    }

    // density-dependent: joint simulation, moving a uniformly chosen vehicle
    // of the source cluster on every event
    if (!entries.empty())
        throw ConfigError("density-dependent synthesis supports closed systems only");
    ClusterGraph mobility_only = g;
    mobility_only.clear_comm();
    SystemState s(J);
    std::vector<std::vector<std::size_t>> members(J);
    std::vector<std::size_t> slot(out.size());
    for (std::size_t v = 0; v < out.size(); ++v) {
        const ClusterId c = starts[v].first;
        ++s.non_informed[c];
        slot[v] = members[c].size();
        members[c].push_back(v);
        out[v].visits.push_back({c, 0.0, 0.0});
    }
    if (out.empty())
        return out;
    CtmcEngine engine(mobility_only, model, routing, s);
    Transition tr{};
    while (engine.step(horizon, rng, false, &tr)) {
        auto& from = members[tr.j];
        const std::size_t pick = std::size_t(rng.below(from.size()));
        const std::size_t v = from[pick];
        from[pick] = from.back();
        slot[from[pick]] = pick;
        from.pop_back();
        slot[v] = members[tr.k].size();
        members[tr.k].push_back(v);
        out[v].visits.back().leave = engine.time();
        out[v].visits.push_back({tr.k, engine.time(), engine.time()});
    }
    for (auto& seq : out) {
        seq.visits.back().leave = horizon;
        detail::finish_sequence(seq, &g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Replay with communication

struct ReplayOptions {
    /// multiplies every beta of the graph
    double beta_scale = 1.0;
    /// probability that a vehicle entering through a virtual entry cluster
    /// is already informed (Bernoulli seeding)
    double informed_probability = 0.0;
    /// exact number of informed entering vehicles, chosen uniformly
    std::optional<std::int64_t> informed_count;
    /// additionally seed vehicles that start inside the study area
    bool seed_study_vehicles = false;
    /// <= 0: end of data
    double horizon = 0.0;
    double sample_dt = 1.0;
};

struct ReplayResult {
    PropagationSeries series;
    std::vector<std::string> warnings;
    std::uint64_t inform_events = 0;
};

namespace detail {

struct Move {
    double t;
    std::size_t vehicle;
    ClusterId to;
};

// Where each vehicle sits at t=0 and every later cluster change. Vehicles
// whose first visit lies inside the study area start in the entry cluster
// feeding it (if any); exited vehicles stay in their exit cluster.
struct ReplayPlan {
    std::vector<ClusterId> start;
    std::vector<bool> entering;
    std::vector<Move> moves;
    double data_end = 0.0;
};

inline ReplayPlan plan_replay(const std::vector<ClusterSequence>& sequences, const ClusterGraph& g)
{
    ReplayPlan plan;
    for (std::size_t v = 0; v < sequences.size(); ++v) {
        const auto& seq = sequences[v];
        if (seq.visits.empty())
            throw DataError("empty cluster sequence for vehicle " + std::to_string(seq.vehicle_id));
        for (const auto& vis : seq.visits)
            if (vis.cluster >= g.size())
                throw DataError("cluster id outside the graph in vehicle " + std::to_string(seq.vehicle_id));
        ClusterId first = seq.visits.front().cluster;
        bool entering = g.region(first) == Region::virtual_entry;
        ClusterId start = first;
        std::size_t from_visit = 1;
        if (!entering && seq.visits.front().enter > 0.0) {
            for (ClusterId i : g.in_neighbors(first))
                if (g.region(i) == Region::virtual_entry) {
                    start = i;
                    entering = true;
                    from_visit = 0;
                    break;
                }
        }
        plan.start.push_back(start);
        plan.entering.push_back(entering);
        for (std::size_t i = from_visit; i < seq.visits.size(); ++i)
            plan.moves.push_back({seq.visits[i].enter, v, seq.visits[i].cluster});
        plan.data_end = std::max(plan.data_end, seq.visits.back().leave);
    }
    std::stable_sort(plan.moves.begin(), plan.moves.end(), [](const Move& a, const Move& b) { return a.t < b.t; });
    return plan;
}

} // namespace detail

/// Recorded mobility with SI communication superimposed. Between
/// consecutive occupancy changes the inform rates (beta_jk / N) nI_j nS_k
/// are constant, so events are drawn exactly with an exponential clock on
/// the total rate, restarted after every event. N is the number of
/// distinct vehicles.
inline ReplayResult replay_with_communication(const std::vector<ClusterSequence>& sequences,
                                              const ClusterGraph& g, const ReplayOptions& opt, std::uint64_t seed)
{
    ReplayResult res;
    if (sequences.empty())
        throw DataError("replay needs at least one vehicle");
    if (!(opt.informed_probability >= 0.0 && opt.informed_probability <= 1.0))
        throw ConfigError("informed probability outside [0, 1]");
    if (!(opt.beta_scale >= 0.0))
        throw ConfigError("beta scale must be non-negative");
    const detail::ReplayPlan plan = detail::plan_replay(sequences, g);
    double horizon = opt.horizon > 0.0 ? opt.horizon : plan.data_end;
    if (horizon > plan.data_end * (1.0 + 1e-12)) {
        res.warnings.push_back("requested horizon " + std::to_string(horizon) + " exceeds the data; truncated to " +
                               std::to_string(plan.data_end));
        horizon = plan.data_end;
    }
    const auto grid = sample_grid(horizon, opt.sample_dt);

    const std::size_t J = g.size();
    const std::size_t V = sequences.size();
    const double n = double(V);
    Rng rng(seed);

    // seeding
    std::vector<char> informed(V, 0);
    std::vector<std::size_t> candidates;
    for (std::size_t v = 0; v < V; ++v)
        if (plan.entering[v] || opt.seed_study_vehicles)
            candidates.push_back(v);
    if (opt.informed_count) {
        const auto m = *opt.informed_count;
        if (m < 0 || std::size_t(m) > candidates.size())
            throw ConfigError("informed count exceeds the number of entering vehicles");
        // partial Fisher-Yates: uniform subset of size m
        for (std::size_t i = 0; i < std::size_t(m); ++i) {
            const std::size_t r = i + std::size_t(rng.below(candidates.size() - i));
            std::swap(candidates[i], candidates[r]);
            informed[candidates[i]] = 1;
        }
    } else {
        for (std::size_t v : candidates)
            informed[v] = rng.uniform() < opt.informed_probability ? 1 : 0;
    }

    // occupancy with per-cluster lists of non-informed vehicles
    SystemState s(J);
    std::vector<ClusterId> where(V);
    std::vector<std::vector<std::size_t>> susceptible(J);
    std::vector<std::size_t> slot(V, 0);
    auto add = [&](std::size_t v, ClusterId c) {
        where[v] = c;
        if (informed[v]) {
            ++s.informed[c];
        } else {
            ++s.non_informed[c];
            slot[v] = susceptible[c].size();
            susceptible[c].push_back(v);
        }
    };
    auto remove = [&](std::size_t v) {
        const ClusterId c = where[v];
        if (informed[v]) {
            --s.informed[c];
        } else {
            --s.non_informed[c];
            auto& list = susceptible[c];
            const std::size_t i = slot[v];
            list[i] = list.back();
            slot[list[i]] = i;
            list.pop_back();
        }
    };
    for (std::size_t v = 0; v < V; ++v)
        add(v, plan.start[v]);

    const auto links = g.comm_links();
    std::vector<double> w(links.size());
    auto total_rate = [&] {
        double total = 0.0;
        for (std::size_t c = 0; c < links.size(); ++c) {
            w[c] = detail::inform_rate(links[c].beta * opt.beta_scale, s.informed[links[c].from],
                                       s.non_informed[links[c].to], n);
            total += w[c];
        }
        return total;
    };

    PropagationSeries& out = res.series;
    out.clusters = J;
    out.total = n;
    std::size_t next_sample = 0;
    std::size_t next_move = 0;
    double t = 0.0;
    auto record_until = [&](double limit, bool inclusive) {
        while (next_sample < grid.size() && (grid[next_sample] < limit || (inclusive && grid[next_sample] == limit))) {
            out.push_sample(grid[next_sample], s);
            ++next_sample;
        }
    };

    // moves at t <= 0 belong to the initial configuration
    while (next_move < plan.moves.size() && plan.moves[next_move].t <= 0.0) {
        remove(plan.moves[next_move].vehicle);
        add(plan.moves[next_move].vehicle, plan.moves[next_move].to);
        ++next_move;
    }
    while (t < horizon) {
        const double t_change = next_move < plan.moves.size() ? std::min(plan.moves[next_move].t, horizon) : horizon;
        // communication on [t, t_change) with piecewise-constant rates
        for (;;) {
            const double total = total_rate();
            if (!(total > 0.0))
                break;
            const double dt = rng.exponential(total);
            if (t + dt >= t_change)
                break;
            t += dt;
            record_until(t, false);
            double target = rng.uniform() * total;
            std::size_t pick = links.size() - 1;
            for (std::size_t c = 0; c < links.size(); ++c) {
                if (target < w[c] && w[c] > 0.0) {
                    pick = c;
                    break;
                }
                target -= w[c];
            }
            while (w[pick] <= 0.0 && pick > 0)
                --pick;
            const ClusterId k = links[pick].to;
            auto& list = susceptible[k];
            const std::size_t v = list[std::size_t(rng.below(list.size()))];
            remove(v);
            informed[v] = 1;
            add(v, k);
            ++res.inform_events;
        }
        t = t_change;
        // state at a sample instant includes changes at that instant
        record_until(t, false);
        while (next_move < plan.moves.size() && plan.moves[next_move].t <= t) {
            remove(plan.moves[next_move].vehicle);
            add(plan.moves[next_move].vehicle, plan.moves[next_move].to);
            ++next_move;
        }
        if (t >= horizon)
            break;
    }
    record_until(horizon, true);
    return res;
}

struct ReplayEnsemble {
    PropagationSeries mean;
    std::vector<std::vector<double>> run_rho;
    std::vector<std::string> warnings;
};

/// Replication i uses seed base_seed + i; aggregation in index order.
inline ReplayEnsemble replay_ensemble(const std::vector<ClusterSequence>& sequences, const ClusterGraph& g,
                                      const ReplayOptions& opt, std::size_t runs, std::uint64_t base_seed,
                                      unsigned threads = 1)
{
    if (runs < 1)
        throw ConfigError("runs must be at least 1");
    std::vector<ReplayResult> results(runs);
    parallel_for(runs, threads, [&](std::size_t i) {
        results[i] = replay_with_communication(sequences, g, opt, base_seed + i);
    });
    ReplayEnsemble e;
    e.warnings = results.front().warnings;
    e.mean = results.front().series;
    const double inv = 1.0 / double(runs);
    std::fill(e.mean.informed.begin(), e.mean.informed.end(), 0.0);
    std::fill(e.mean.non_informed.begin(), e.mean.non_informed.end(), 0.0);
    std::fill(e.mean.rho.begin(), e.mean.rho.end(), 0.0);
    for (const auto& r : results) {
        for (std::size_t i = 0; i < e.mean.informed.size(); ++i) {
            e.mean.informed[i] += r.series.informed[i];
            e.mean.non_informed[i] += r.series.non_informed[i];
        }
        for (std::size_t i = 0; i < e.mean.rho.size(); ++i)
            e.mean.rho[i] += r.series.rho[i];
        e.run_rho.push_back(r.series.rho);
    }
    for (auto& v : e.mean.informed)
        v *= inv;
    for (auto& v : e.mean.non_informed)
        v *= inv;
    for (auto& v : e.mean.rho)
        v *= inv;
    return e;
}

} // namespace infoprop
