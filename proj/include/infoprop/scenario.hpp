#pragma once

// Scenario configuration (JSON), the engines it drives, and the case
// studies: event dispersion, roadblock, seed placement, trajectory replay,
// plus the chain benchmark.

#include "infoprop/analysis.hpp"
#include "infoprop/ctmc.hpp"
#include "infoprop/error.hpp"
#include "infoprop/fluid.hpp"
#include "infoprop/graph_io.hpp"
#include "infoprop/parallel.hpp"
#include "infoprop/rates.hpp"
#include "infoprop/topology.hpp"
#include "infoprop/trajectory.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace infoprop {

enum class Engine { ctmc, ode, replay, both };
enum class CaseStudy { none, event, roadblock, initial_location, trajectory };

inline std::string_view to_string(Engine e)
{
    switch (e) {
    case Engine::ctmc: return "ctmc";
    case Engine::ode: return "ode";
    case Engine::replay: return "replay";
    case Engine::both: return "both";
    }
    return "ode";
}

inline Engine engine_from_string(std::string_view s)
{
    if (s == "ctmc") return Engine::ctmc;
    if (s == "ode") return Engine::ode;
    if (s == "replay") return Engine::replay;
    if (s == "both") return Engine::both;
    throw ConfigError("unknown engine '" + std::string(s) + "'");
}

inline std::string_view to_string(CaseStudy c)
{
    switch (c) {
    case CaseStudy::none: return "none";
    case CaseStudy::event: return "event";
    case CaseStudy::roadblock: return "roadblock";
    case CaseStudy::initial_location: return "initial_location";
    case CaseStudy::trajectory: return "trajectory";
    }
    return "none";
}

inline CaseStudy case_study_from_string(std::string_view s)
{
    if (s == "none") return CaseStudy::none;
    if (s == "event") return CaseStudy::event;
    if (s == "roadblock") return CaseStudy::roadblock;
    if (s == "initial_location") return CaseStudy::initial_location;
    if (s == "trajectory") return CaseStudy::trajectory;
    throw ConfigError("unknown case study '" + std::string(s) + "'");
}

inline Axis axis_from_string(std::string_view s)
{
    if (s == "horizontal" || s == "h") return Axis::horizontal;
    if (s == "vertical" || s == "v") return Axis::vertical;
    throw ConfigError("unknown axis '" + std::string(s) + "'");
}

inline std::string_view to_string(Axis a) { return a == Axis::horizontal ? "horizontal" : "vertical"; }

// ---------------------------------------------------------------------------
// Configuration

/// A seeded cluster, by id or by grid position.
struct SeedPlacement {
    std::optional<ClusterId> cluster;
    int x = 0, y = 0;
    Axis axis = Axis::horizontal;
    bool forward = true;
    /// informed vehicles; `fraction` of the cluster occupancy overrides it
    std::int64_t informed = 0;
    std::optional<double> fraction;
};

struct GridSegment {
    int x = 0, y = 0;
    Axis axis = Axis::horizontal;
};

struct TopologySpec {
    std::string kind = "grid"; // grid | chain | file
    int avenues = 6, streets = 6;
    Rect cbd{2, 2, 3, 3};
    bool cbd_inclusive = true;
    bool allow_u_turns = false;
    std::size_t clusters = 0;
    std::string file;
};

struct MobilitySpec {
    RateLaw law = RateLaw::uniform;
    double lambda = 0.1, lambda_d = 0.1, lambda_o = 0.1, a = 1.0, b = 1.0;
    std::string table_file;
    EntryInflow inflow = EntryInflow::constant;
    /// N for a tabulated table; 0 takes the table's vehicle count
    double nominal_n = 0.0;
};

struct BetaSpec {
    /// beta for same-segment pairs; negative keeps whatever the graph has
    double same_segment = -1.0;
    std::vector<CommLink> pairs;
    std::string matrix_file;
};

struct InitialSpec {
    std::string kind = "uniform"; // uniform | event | blocked | reservoir
    std::int64_t per_cluster = 0;
    std::vector<SeedPlacement> seeds;
    // event: "bounding" takes the 4 segments around the block whose lower
    // left corner is (event_x, event_y); "incident" the 4 segments meeting
    // at that intersection
    std::string event_layout = "bounding";
    int event_x = 3, event_y = 3;
    double event_fraction = 0.125;
    /// checked against the computed total when > 0
    std::int64_t expected_total = 0;
    // reservoir seeding for open systems
    std::optional<std::int64_t> informed_count;
    double informed_fraction = 0.0;
};

struct Placement {
    std::string name;
    std::vector<SeedPlacement> seeds;
};

struct MetricsSpec {
    double reach_threshold = 1.0;
    double congestion_pct = 15.0;
    double congestion_increase = 1.0;
    /// reach counts clusters ever reached rather than currently holding
    bool cumulative_reach = false;
};

struct TrajectorySpec {
    std::string source = "synthetic"; // synthetic | file
    std::string file;
    std::string regions;
    std::string graph_file;
    nlohmann::json mapping = nlohmann::json::object();
    std::int64_t vehicles = 1993;
    double duration = 831.7;
    std::int64_t informed_count = 402;
    std::size_t runs = 30;
    std::vector<double> beta_values{1.0, 3.0, 10.0};
    double hysteresis = 0.5;
};

struct ScenarioConfig {
    std::string name = "scenario";
    TopologySpec topology;
    MobilitySpec mobility;
    double gamma = 1.0;
    BetaSpec beta;
    InitialSpec initial;
    double horizon = 200.0;
    double sample_dt = 1.0;
    Engine engine = Engine::ode;
    std::size_t runs = 1;
    std::uint64_t seed = 1;
    unsigned threads = 0;
    double tol = 1e-8;
    double fixed_dt = 0.0;
    std::vector<GridSegment> blocked_segments;
    std::vector<ClusterId> blocked_clusters;
    std::vector<double> beta_sweep;
    CaseStudy case_study = CaseStudy::none;
    std::vector<Placement> placements;
    MetricsSpec metrics;
    std::optional<TrajectorySpec> trajectory;
    std::string output = "out";
    /// directory relative paths resolve against; not serialized
    std::string base_dir;

    std::string resolve(const std::string& path) const
    {
        if (path.empty() || base_dir.empty() || std::filesystem::path(path).is_absolute())
            return path;
        return (std::filesystem::path(base_dir) / path).string();
    }

    unsigned worker_threads() const { return threads ? threads : default_threads(); }

    void validate() const
    {
        if (!(horizon > 0.0) || !(sample_dt > 0.0))
            throw ConfigError("horizon and sample_dt must be positive");
        if (runs < 1)
            throw ConfigError("runs must be at least 1");
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw ConfigError("gamma must be positive");
        if (!(tol > 0.0) || fixed_dt < 0.0)
            throw ConfigError("tol must be positive and fixed_dt non-negative");
        if (initial.per_cluster < 0)
            throw ConfigError("per_cluster must be >= 0");
        for (const auto& s : initial.seeds)
            if (s.fraction && !(*s.fraction >= 0.0 && *s.fraction <= 1.0))
                throw ConfigError("seed fraction outside [0, 1]");
        for (const auto& p : placements)
            for (const auto& s : p.seeds)
                if (s.fraction && !(*s.fraction >= 0.0 && *s.fraction <= 1.0))
                    throw ConfigError("seed fraction outside [0, 1]");
        if (!(initial.event_fraction >= 0.0 && initial.event_fraction < 1.0))
            throw ConfigError("event_fraction outside [0, 1)");
        if (!(initial.informed_fraction >= 0.0 && initial.informed_fraction <= 1.0))
            throw ConfigError("informed_fraction outside [0, 1]");
        if (initial.kind != "uniform" && initial.kind != "event" && initial.kind != "blocked" &&
            initial.kind != "reservoir")
            throw ConfigError("unknown initial kind '" + initial.kind + "'");
        if (initial.event_layout != "bounding" && initial.event_layout != "incident")
            throw ConfigError("event_layout must be bounding or incident");
        if (topology.kind != "grid" && topology.kind != "chain" && topology.kind != "file")
            throw ConfigError("unknown topology kind '" + topology.kind + "'");
        if ((initial.kind == "event" || !blocked_segments.empty()) && topology.kind != "grid")
            throw ConfigError("event placement and blocked segments need a grid topology");
        if (engine == Engine::replay && !trajectory)
            throw ConfigError("engine=replay requires a trajectory section");
        if (case_study == CaseStudy::trajectory && !trajectory)
            throw ConfigError("the trajectory case study requires a trajectory section");
        if (case_study == CaseStudy::roadblock && beta_sweep.empty())
            throw ConfigError("the roadblock case study requires beta_sweep");
        if (case_study == CaseStudy::initial_location && placements.size() < 2)
            throw ConfigError("the initial_location study requires two placements");
        for (double b : beta_sweep)
            if (!(b >= 0.0))
                throw ConfigError("beta_sweep values must be >= 0");
        if (trajectory) {
            if (trajectory->source != "synthetic" && trajectory->source != "file")
                throw ConfigError("trajectory source must be synthetic or file");
            if (trajectory->source == "file" && (trajectory->file.empty() || trajectory->regions.empty()))
                throw ConfigError("file trajectories need 'file' and 'regions'");
            if (trajectory->vehicles < 0 || trajectory->informed_count < 0 ||
                trajectory->informed_count > trajectory->vehicles)
                throw ConfigError("trajectory informed_count must lie in [0, vehicles]");
            if (!(trajectory->duration > 0.0) || trajectory->runs < 1)
                throw ConfigError("trajectory duration must be positive and runs >= 1");
        }
    }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where)
{
    if (!j.is_object())
        throw ConfigError(std::string(where) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            ok = ok || it.key() == k;
        if (!ok)
            throw ConfigError(std::string("unknown key '") + it.key() + "' in " + where);
    }
}

inline SeedPlacement seed_from_json(const nlohmann::json& j)
{
    reject_unknown(j, {"cluster", "x", "y", "axis", "forward", "informed", "fraction"}, "seed");
    SeedPlacement s;
    if (j.contains("cluster"))
        s.cluster = j["cluster"].get<ClusterId>();
    s.x = j.value("x", 0);
    s.y = j.value("y", 0);
    s.axis = axis_from_string(j.value("axis", std::string("horizontal")));
    s.forward = j.value("forward", true);
    s.informed = j.value("informed", std::int64_t{0});
    if (j.contains("fraction"))
        s.fraction = j["fraction"].get<double>();
    return s;
}

inline nlohmann::json seed_to_json(const SeedPlacement& s)
{
    nlohmann::json j;
    if (s.cluster) {
        j["cluster"] = *s.cluster;
    } else {
        j["x"] = s.x;
        j["y"] = s.y;
        j["axis"] = std::string(to_string(s.axis));
        j["forward"] = s.forward;
    }
    if (s.fraction)
        j["fraction"] = *s.fraction;
    else
        j["informed"] = s.informed;
    return j;
}

inline std::vector<SeedPlacement> seeds_from_json(const nlohmann::json& j)
{
    std::vector<SeedPlacement> out;
    for (const auto& s : j)
        out.push_back(seed_from_json(s));
    return out;
}

inline nlohmann::json seeds_to_json(const std::vector<SeedPlacement>& v)
{
    auto a = nlohmann::json::array();
    for (const auto& s : v)
        a.push_back(seed_to_json(s));
    return a;
}

} // namespace detail

inline ScenarioConfig parse_scenario(const nlohmann::json& j)
{
    ScenarioConfig c;
    try {
        detail::reject_unknown(j,
                               {"name", "topology", "mobility", "gamma", "beta", "initial", "horizon", "sample_dt",
                                "engine", "runs", "seed", "threads", "integrator", "blocked_segments",
                                "blocked_clusters", "beta_sweep", "case_study", "placements", "metrics",
                                "trajectory", "output"},
                               "scenario");
        c.name = j.value("name", c.name);
        if (j.contains("topology")) {
            const auto& t = j["topology"];
            detail::reject_unknown(t, {"kind", "avenues", "streets", "cbd", "cbd_inclusive", "allow_u_turns",
                                       "clusters", "file"},
                                   "topology");
            c.topology.kind = t.value("kind", c.topology.kind);
            c.topology.avenues = t.value("avenues", c.topology.avenues);
            c.topology.streets = t.value("streets", c.topology.streets);
            if (t.contains("cbd")) {
                const auto r = t["cbd"].get<std::vector<double>>();
                if (r.size() != 4)
                    throw ConfigError("cbd must be [x0, y0, x1, y1]");
                c.topology.cbd = {r[0], r[1], r[2], r[3]};
            }
            c.topology.cbd_inclusive = t.value("cbd_inclusive", c.topology.cbd_inclusive);
            c.topology.allow_u_turns = t.value("allow_u_turns", c.topology.allow_u_turns);
            c.topology.clusters = t.value("clusters", c.topology.clusters);
            c.topology.file = t.value("file", c.topology.file);
        }
        if (j.contains("mobility")) {
            const auto& m = j["mobility"];
            detail::reject_unknown(m, {"law", "lambda", "lambda_d", "lambda_o", "a", "b", "table_file", "inflow",
                                       "nominal_n"},
                                   "mobility");
            c.mobility.law = rate_law_from_string(m.value("law", std::string("uniform")));
            c.mobility.lambda = m.value("lambda", c.mobility.lambda);
            c.mobility.lambda_d = m.value("lambda_d", c.mobility.lambda_d);
            c.mobility.lambda_o = m.value("lambda_o", c.mobility.lambda_o);
            c.mobility.a = m.value("a", c.mobility.a);
            c.mobility.b = m.value("b", c.mobility.b);
            c.mobility.table_file = m.value("table_file", c.mobility.table_file);
            const std::string inflow = m.value("inflow", std::string("constant"));
            if (inflow != "constant" && inflow != "reservoir")
                throw ConfigError("inflow must be constant or reservoir");
            c.mobility.inflow = inflow == "constant" ? EntryInflow::constant : EntryInflow::reservoir;
            c.mobility.nominal_n = m.value("nominal_n", c.mobility.nominal_n);
        }
        c.gamma = j.value("gamma", c.gamma);
        if (j.contains("beta")) {
            const auto& b = j["beta"];
            if (b.is_number()) {
                c.beta.same_segment = b.get<double>();
            } else {
                detail::reject_unknown(b, {"same_segment", "pairs", "matrix_file"}, "beta");
                c.beta.same_segment = b.value("same_segment", c.beta.same_segment);
                for (const auto& p : b.value("pairs", nlohmann::json::array()))
                    c.beta.pairs.push_back({p.at(0).get<ClusterId>(), p.at(1).get<ClusterId>(), p.at(2).get<double>()});
                c.beta.matrix_file = b.value("matrix_file", c.beta.matrix_file);
            }
        }
        if (j.contains("initial")) {
            const auto& i = j["initial"];
            detail::reject_unknown(i, {"kind", "per_cluster", "seeds", "event_layout", "event_at", "event_fraction",
                                       "expected_total", "informed_count", "informed_fraction"},
                                   "initial");
            c.initial.kind = i.value("kind", c.initial.kind);
            c.initial.per_cluster = i.value("per_cluster", c.initial.per_cluster);
            if (i.contains("seeds"))
                c.initial.seeds = detail::seeds_from_json(i["seeds"]);
            c.initial.event_layout = i.value("event_layout", c.initial.event_layout);
            if (i.contains("event_at")) {
                c.initial.event_x = i["event_at"].at(0).get<int>();
                c.initial.event_y = i["event_at"].at(1).get<int>();
            }
            c.initial.event_fraction = i.value("event_fraction", c.initial.event_fraction);
            c.initial.expected_total = i.value("expected_total", c.initial.expected_total);
            if (i.contains("informed_count"))
                c.initial.informed_count = i["informed_count"].get<std::int64_t>();
            c.initial.informed_fraction = i.value("informed_fraction", c.initial.informed_fraction);
        }
        c.horizon = j.value("horizon", c.horizon);
        c.sample_dt = j.value("sample_dt", c.sample_dt);
        c.engine = engine_from_string(j.value("engine", std::string("ode")));
        c.runs = j.value("runs", c.runs);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        if (j.contains("integrator")) {
            const auto& i = j["integrator"];
            detail::reject_unknown(i, {"tol", "fixed_dt"}, "integrator");
            c.tol = i.value("tol", c.tol);
            c.fixed_dt = i.value("fixed_dt", c.fixed_dt);
        }
        for (const auto& s : j.value("blocked_segments", nlohmann::json::array()))
            c.blocked_segments.push_back(
                {s.at(0).get<int>(), s.at(1).get<int>(), axis_from_string(s.at(2).get<std::string>())});
        c.blocked_clusters = j.value("blocked_clusters", c.blocked_clusters);
        c.beta_sweep = j.value("beta_sweep", c.beta_sweep);
        c.case_study = case_study_from_string(j.value("case_study", std::string("none")));
        for (const auto& p : j.value("placements", nlohmann::json::array())) {
            detail::reject_unknown(p, {"name", "seeds"}, "placement");
            c.placements.push_back({p.value("name", std::string()), detail::seeds_from_json(p.at("seeds"))});
        }
        if (j.contains("metrics")) {
            const auto& m = j["metrics"];
            detail::reject_unknown(m, {"reach_threshold", "congestion_pct", "congestion_increase", "cumulative_reach"},
                                   "metrics");
            c.metrics.reach_threshold = m.value("reach_threshold", c.metrics.reach_threshold);
            c.metrics.congestion_pct = m.value("congestion_pct", c.metrics.congestion_pct);
            c.metrics.congestion_increase = m.value("congestion_increase", c.metrics.congestion_increase);
            c.metrics.cumulative_reach = m.value("cumulative_reach", c.metrics.cumulative_reach);
        }
        if (j.contains("trajectory")) {
            const auto& t = j["trajectory"];
            detail::reject_unknown(t, {"source", "file", "regions", "graph_file", "mapping", "vehicles", "duration",
                                       "informed_count", "runs", "beta_values", "hysteresis"},
                                   "trajectory");
            TrajectorySpec ts;
            ts.source = t.value("source", ts.source);
            ts.file = t.value("file", ts.file);
            ts.regions = t.value("regions", ts.regions);
            ts.graph_file = t.value("graph_file", ts.graph_file);
            ts.mapping = t.value("mapping", ts.mapping);
            ts.vehicles = t.value("vehicles", ts.vehicles);
            ts.duration = t.value("duration", ts.duration);
            ts.informed_count = t.value("informed_count", ts.informed_count);
            ts.runs = t.value("runs", ts.runs);
            ts.beta_values = t.value("beta_values", ts.beta_values);
            ts.hysteresis = t.value("hysteresis", ts.hysteresis);
            c.trajectory = ts;
        }
        c.output = j.value("output", c.output);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c)
{
    nlohmann::json j;
    j["name"] = c.name;
    nlohmann::json t;
    t["kind"] = c.topology.kind;
    if (c.topology.kind == "grid") {
        t["avenues"] = c.topology.avenues;
        t["streets"] = c.topology.streets;
        t["cbd"] = {c.topology.cbd.x0, c.topology.cbd.y0, c.topology.cbd.x1, c.topology.cbd.y1};
        t["cbd_inclusive"] = c.topology.cbd_inclusive;
        t["allow_u_turns"] = c.topology.allow_u_turns;
    } else if (c.topology.kind == "chain") {
        t["clusters"] = c.topology.clusters;
    } else {
        t["file"] = c.topology.file;
    }
    j["topology"] = t;
    nlohmann::json m;
    m["law"] = std::string(to_string(c.mobility.law));
    m["lambda"] = c.mobility.lambda;
    m["lambda_d"] = c.mobility.lambda_d;
    m["lambda_o"] = c.mobility.lambda_o;
    m["a"] = c.mobility.a;
    m["b"] = c.mobility.b;
    if (!c.mobility.table_file.empty())
        m["table_file"] = c.mobility.table_file;
    m["inflow"] = c.mobility.inflow == EntryInflow::constant ? "constant" : "reservoir";
    m["nominal_n"] = c.mobility.nominal_n;
    j["mobility"] = m;
    j["gamma"] = c.gamma;
    nlohmann::json b;
    b["same_segment"] = c.beta.same_segment;
    auto pairs = nlohmann::json::array();
    for (const auto& p : c.beta.pairs)
        pairs.push_back({p.from, p.to, p.beta});
    b["pairs"] = pairs;
    if (!c.beta.matrix_file.empty())
        b["matrix_file"] = c.beta.matrix_file;
    j["beta"] = b;
    nlohmann::json i;
    i["kind"] = c.initial.kind;
    i["per_cluster"] = c.initial.per_cluster;
    i["seeds"] = detail::seeds_to_json(c.initial.seeds);
    i["event_layout"] = c.initial.event_layout;
    i["event_at"] = {c.initial.event_x, c.initial.event_y};
    i["event_fraction"] = c.initial.event_fraction;
    i["expected_total"] = c.initial.expected_total;
    if (c.initial.informed_count)
        i["informed_count"] = *c.initial.informed_count;
    i["informed_fraction"] = c.initial.informed_fraction;
    j["initial"] = i;
    j["horizon"] = c.horizon;
    j["sample_dt"] = c.sample_dt;
    j["engine"] = std::string(to_string(c.engine));
    j["runs"] = c.runs;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["integrator"] = {{"tol", c.tol}, {"fixed_dt", c.fixed_dt}};
    auto bs = nlohmann::json::array();
    for (const auto& s : c.blocked_segments)
        bs.push_back({s.x, s.y, std::string(to_string(s.axis))});
    j["blocked_segments"] = bs;
    j["blocked_clusters"] = c.blocked_clusters;
    j["beta_sweep"] = c.beta_sweep;
    j["case_study"] = std::string(to_string(c.case_study));
    auto pl = nlohmann::json::array();
    for (const auto& p : c.placements)
        pl.push_back({{"name", p.name}, {"seeds", detail::seeds_to_json(p.seeds)}});
    j["placements"] = pl;
    j["metrics"] = {{"reach_threshold", c.metrics.reach_threshold},
                    {"congestion_pct", c.metrics.congestion_pct},
                    {"congestion_increase", c.metrics.congestion_increase},
                    {"cumulative_reach", c.metrics.cumulative_reach}};
    if (c.trajectory) {
        const auto& ts = *c.trajectory;
        nlohmann::json tj;
        tj["source"] = ts.source;
        tj["file"] = ts.file;
        tj["regions"] = ts.regions;
        tj["graph_file"] = ts.graph_file;
        tj["mapping"] = ts.mapping;
        tj["vehicles"] = ts.vehicles;
        tj["duration"] = ts.duration;
        tj["informed_count"] = ts.informed_count;
        tj["runs"] = ts.runs;
        tj["beta_values"] = ts.beta_values;
        tj["hysteresis"] = ts.hysteresis;
        j["trajectory"] = tj;
    }
    j["output"] = c.output;
    return j;
}

inline ScenarioConfig load_scenario(const std::string& path)
{
    auto c = parse_scenario(read_json_file(path));
    c.base_dir = std::filesystem::path(path).parent_path().string();
    return c;
}

// ---------------------------------------------------------------------------
// Building blocks

namespace detail {

inline ClusterId resolve_seed(const SeedPlacement& s, const ScenarioConfig& c, const ClusterGraph& g)
{
    ClusterId id;
    if (s.cluster) {
        id = *s.cluster;
    } else {
        if (c.topology.kind != "grid")
            throw ConfigError("grid seed positions need a grid topology");
        try {
            id = GridLayout{c.topology.avenues, c.topology.streets}.cluster(s.x, s.y, s.axis, s.forward);
        } catch (const ContractViolation& e) {
            throw ConfigError(std::string("seed position: ") + e.what());
        }
    }
    if (id >= g.size())
        throw ConfigError("seed cluster " + std::to_string(id) + " out of range");
    return id;
}

inline void apply_seeds(SystemState& s, const std::vector<SeedPlacement>& seeds, const ScenarioConfig& c,
                        const ClusterGraph& g)
{
    for (const auto& seed : seeds) {
        const ClusterId j = resolve_seed(seed, c, g);
        const std::int64_t occ = s.occupancy(j);
        const std::int64_t k = seed.fraction ? std::llround(*seed.fraction * double(occ)) : seed.informed;
        if (k < 0 || k > s.non_informed[j])
            throw ConfigError("seed of " + std::to_string(k) + " informed exceeds the non-informed vehicles of cluster " +
                              std::to_string(j));
        s.informed[j] += k;
        s.non_informed[j] -= k;
    }
}

/// Clusters of the 4 segments bounding block (x, y)-(x+1, y+1), or of the
/// 4 segments meeting at intersection (x, y).
inline std::vector<ClusterId> event_clusters(const ScenarioConfig& c)
{
    const GridLayout L{c.topology.avenues, c.topology.streets};
    const int x = c.initial.event_x, y = c.initial.event_y;
    std::vector<std::size_t> segs;
    try {
        if (c.initial.event_layout == "bounding") {
            segs = {L.segment(x, y, Axis::horizontal), L.segment(x, y + 1, Axis::horizontal),
                    L.segment(x, y, Axis::vertical), L.segment(x + 1, y, Axis::vertical)};
        } else {
            segs = {L.segment(x, y, Axis::horizontal), L.segment(x - 1, y, Axis::horizontal),
                    L.segment(x, y, Axis::vertical), L.segment(x, y - 1, Axis::vertical)};
        }
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("event site: ") + e.what());
    }
    std::vector<ClusterId> out;
    for (std::size_t s : segs) {
        out.push_back(2 * s);
        out.push_back(2 * s + 1);
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::vector<double>> read_matrix_csv(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read " + path);
    std::vector<std::vector<double>> m;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        std::vector<double> row;
        for (const auto& cell : split_csv_line(line))
            row.push_back(parse_double(cell));
        m.push_back(std::move(row));
    }
    return m;
}

} // namespace detail

/// Blocked cluster set R: explicit ids plus both clusters of every blocked
/// grid segment.
inline std::set<ClusterId> blocked_set(const ScenarioConfig& c)
{
    std::set<ClusterId> r(c.blocked_clusters.begin(), c.blocked_clusters.end());
    const GridLayout L{c.topology.avenues, c.topology.streets};
    for (const auto& s : c.blocked_segments) {
        std::size_t seg;
        try {
            seg = L.segment(s.x, s.y, s.axis);
        } catch (const ContractViolation& e) {
            throw ConfigError(std::string("blocked segment: ") + e.what());
        }
        r.insert(2 * seg);
        r.insert(2 * seg + 1);
    }
    return r;
}

/// Topology with communication and blocking applied.
inline ClusterGraph build_scenario_graph(const ScenarioConfig& c)
{
    ClusterGraph g(1);
    const auto& t = c.topology;
    if (t.kind == "grid") {
        GridOptions o;
        o.cbd_inclusive = t.cbd_inclusive;
        o.allow_u_turns = t.allow_u_turns;
        g = build_grid(t.avenues, t.streets, t.cbd, o);
    } else if (t.kind == "chain") {
        g = build_chain(t.clusters);
    } else {
        g = graph_from_json(read_json_file(c.resolve(t.file)));
    }
    if (c.beta.same_segment >= 0.0)
        set_same_segment_beta(g, c.beta.same_segment);
    for (const auto& p : c.beta.pairs) {
        if (p.from >= g.size() || p.to >= g.size())
            throw ConfigError("beta pair references an unknown cluster");
        g.set_beta(p.from, p.to, p.beta);
    }
    if (!c.beta.matrix_file.empty()) {
        const auto m = detail::read_matrix_csv(c.resolve(c.beta.matrix_file));
        if (m.size() != g.size())
            throw ConfigError("beta matrix must be J x J");
        g.clear_comm();
        for (ClusterId j = 0; j < g.size(); ++j) {
            if (m[j].size() != g.size())
                throw ConfigError("beta matrix must be J x J");
            for (ClusterId k = 0; k < g.size(); ++k)
                if (m[j][k] != 0.0)
                    g.set_beta(j, k, m[j][k]);
        }
    }
    const auto r = blocked_set(c);
    for (ClusterId k : r)
        if (k >= g.size())
            throw ConfigError("blocked cluster " + std::to_string(k) + " out of range");
    if (!r.empty())
        g = block_clusters(g, r);
    g.validate();
    return g;
}

inline MobilityModel build_scenario_model(const ScenarioConfig& c)
{
    const auto& m = c.mobility;
    MobilityModel model;
    switch (m.law) {
    case RateLaw::uniform: model = MobilityModel::uniform(m.lambda); break;
    case RateLaw::two_level: model = MobilityModel::two_level(m.lambda_d, m.lambda_o); break;
    case RateLaw::density_dependent: model = MobilityModel::density_dependent(m.lambda, m.a, m.b); break;
    case RateLaw::tabulated: {
        if (m.table_file.empty())
            throw ConfigError("tabulated mobility needs table_file");
        const auto rt = rate_table_from_json(read_json_file(c.resolve(m.table_file)));
        model = MobilityModel::tabulated(std::make_shared<MobilityTable>(rt.to_mobility_table(m.nominal_n, m.inflow)));
        break;
    }
    }
    model.validate();
    return model;
}

inline RoutingTable build_scenario_routing(const ScenarioConfig& c, const ClusterGraph& g)
{
    if (c.mobility.law == RateLaw::tabulated)
        return RoutingTable::uniform(g);
    return routing_probabilities(g, c.gamma);
}

/// Integer initial state for the configured initial condition.
inline SystemState build_initial_state(const ScenarioConfig& c, const ClusterGraph& g, const MobilityModel& model,
                                       const std::vector<SeedPlacement>* seeds_override = nullptr)
{
    const auto& in = c.initial;
    SystemState s(g.size());
    if (in.kind == "reservoir") {
        if (model.law != RateLaw::tabulated)
            throw ConfigError("reservoir seeding needs a tabulated model");
        SeedSpec spec;
        spec.informed_fraction = in.informed_fraction;
        spec.informed_count = in.informed_count;
        return open_system_counts(g, *model.table, spec);
    }
    for (ClusterId j = 0; j < g.size(); ++j)
        if (!is_virtual(g.region(j)))
            s.non_informed[j] = in.per_cluster;
    if (in.kind == "event") {
        const auto ev = detail::event_clusters(c);
        const std::int64_t others = in.per_cluster * std::int64_t(g.size() - ev.size());
        // event vehicles are event_fraction of the total
        const double exact = in.event_fraction / (1.0 - in.event_fraction) * double(others);
        const auto event_total = std::llround(exact);
        if (std::abs(exact - double(event_total)) > 1e-6 || event_total % std::int64_t(ev.size()) != 0)
            throw ConfigError("event fraction does not give a whole number of vehicles per event cluster");
        const std::int64_t total = others + event_total;
        if (in.expected_total > 0 && total != in.expected_total)
            throw ConfigError("event layout gives N = " + std::to_string(total) + ", expected " +
                              std::to_string(in.expected_total));
        for (ClusterId j : ev) {
            s.non_informed[j] = 0;
            s.informed[j] = event_total / std::int64_t(ev.size());
        }
    } else if (in.kind == "blocked") {
        const auto r = blocked_set(c);
        if (r.empty())
            throw ConfigError("initial kind 'blocked' needs blocked clusters");
        for (ClusterId j : r) {
            s.informed[j] = s.non_informed[j];
            s.non_informed[j] = 0;
        }
    }
    detail::apply_seeds(s, seeds_override ? *seeds_override : in.seeds, c, g);
    if (s.total() == 0)
        throw ConfigError("initial state has no vehicles");
    return s;
}

inline FluidState build_initial_fluid(const ScenarioConfig& c, const ClusterGraph& g, const MobilityModel& model,
                                      const SystemState& counts)
{
    if (c.initial.kind == "reservoir") {
        SeedSpec spec;
        spec.informed_fraction = c.initial.informed_fraction;
        spec.informed_count = c.initial.informed_count;
        return open_system_extend(g, *model.table, spec).x0;
    }
    return FluidState::from_counts(counts, double(counts.total()));
}

inline IntegrateOptions integrate_options(const ScenarioConfig& c)
{
    IntegrateOptions o;
    o.tol = c.tol;
    o.fixed_dt = c.fixed_dt;
    return o;
}

/// Copy of g with every communication rate multiplied by `scale`.
inline ClusterGraph scale_beta(const ClusterGraph& g, double scale)
{
    ClusterGraph out = g;
    out.clear_comm();
    if (scale != 0.0)
        for (const auto& l : g.comm_links())
            out.set_beta(l.from, l.to, l.beta * scale);
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory stand-in

/// Two-lane freeway stand-in with 12 clusters: study clusters 1..8 in four
/// sections (lane a: 7 -> 5 -> 3 -> 1, lane b: 8 -> 6 -> 4 -> 2, lane
/// changes within a section), entries 9 -> 7 and 11 -> 8, exits 1 -> 0 and
/// an off-ramp 3 -> 10. Same-section pairs communicate with beta = 1.
inline ClusterGraph us101_standin_graph()
{
    ClusterGraph g(12);
    const double lane_y[2] = {3.7, 0.0};
    // section 0 is upstream
    const ClusterId lane_a[4] = {7, 5, 3, 1}, lane_b[4] = {8, 6, 4, 2};
    for (int s = 0; s < 4; ++s) {
        for (int l = 0; l < 2; ++l) {
            const ClusterId c = l == 0 ? lane_a[s] : lane_b[s];
            g.set_center(c, {50.0 + 100.0 * s, lane_y[l]});
            g.set_region(c, Region::study);
            g.set_segment(c, std::size_t(s));
        }
        g.add_mobility_edge(lane_a[s], lane_b[s]);
        g.add_mobility_edge(lane_b[s], lane_a[s]);
        if (s < 3) {
            g.add_mobility_edge(lane_a[s], lane_a[s + 1]);
            g.add_mobility_edge(lane_b[s], lane_b[s + 1]);
        }
    }
    g.set_center(9, {-50.0, 3.7});
    g.set_center(11, {-50.0, 0.0});
    g.set_center(0, {450.0, 3.7});
    g.set_center(10, {300.0, 15.0});
    g.set_region(9, Region::virtual_entry);
    g.set_region(11, Region::virtual_entry);
    g.set_region(0, Region::virtual_exit);
    g.set_region(10, Region::virtual_exit);
    g.set_segment(9, 4);
    g.set_segment(11, 5);
    g.set_segment(0, 6);
    g.set_segment(10, 7);
    g.add_mobility_edge(9, 7);
    g.add_mobility_edge(11, 8);
    g.add_mobility_edge(1, 0);
    g.add_mobility_edge(3, 10);
    set_same_segment_beta(g, 1.0);
    g.validate();
    return g;
}

/// Exponential ground truth for the stand-in: total outflow about 0.2 per
/// second per study cluster; arrivals split evenly across the two entries
/// so that `vehicles` arrive over `duration` seconds.
inline MobilityTable us101_standin_table(std::int64_t vehicles, double duration)
{
    MobilityTable t;
    auto set = [&](ClusterId j, ClusterId k, double r) { t.rates[{j, k}] = r; };
    set(7, 5, 0.17); set(7, 8, 0.04);
    set(8, 6, 0.17); set(8, 7, 0.04);
    set(5, 3, 0.16); set(5, 6, 0.04);
    set(6, 4, 0.16); set(6, 5, 0.04);
    set(3, 1, 0.12); set(3, 10, 0.05); set(3, 4, 0.03);
    set(4, 2, 0.16); set(4, 3, 0.05);
    set(1, 0, 0.18); set(1, 2, 0.02);
    set(2, 1, 0.20);
    const double per_entry = double(vehicles) / duration / 2.0;
    t.entry[{9, 7}] = per_entry;
    t.entry[{11, 8}] = per_entry;
    t.nominal_n = double(vehicles);
    t.inflow = EntryInflow::constant;
    return t;
}

// ---------------------------------------------------------------------------
// Results

struct BetaCurve {
    double beta = 0.0;
    PropagationSeries series;
    std::vector<double> reach;
};

struct LocationStudy {
    std::vector<std::string> names;
    std::vector<PropagationSeries> series;
    /// first sample where the second placement leads after the first led
    std::optional<double> crossover;
    bool first_leads_early = false;
    double max_difference = 0.0;
};

struct TrajectoryCase {
    double beta = 0.0;
    PropagationSeries ode;
    PropagationSeries replay;
    double deviation = 0.0;
};

struct TrajectoryStudy {
    RateTable rates;
    std::size_t vehicles = 0;
    std::vector<TrajectoryCase> cases;
    std::vector<std::string> warnings;
};

struct ScenarioResult {
    std::optional<PropagationSeries> ode;
    std::optional<EnsembleResult> ctmc;
    std::optional<double> max_deviation;
    std::vector<double> reach;
    std::vector<double> congestion;
    std::vector<double> congestion_absolute;
    std::vector<BetaCurve> sweep;
    std::optional<LocationStudy> location;
    std::optional<TrajectoryStudy> trajectory;
    nlohmann::json metrics = nlohmann::json::object();
    std::string report;
};

// ---------------------------------------------------------------------------
// Studies

/// Crossover of b over a: the first sample where b - a > eps, given some
/// earlier sample had a - b > eps.
inline std::optional<double> crossover_time(const std::vector<double>& t, const std::vector<double>& a,
                                            const std::vector<double>& b, double eps = 1e-6)
{
    bool a_led = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = b[i] - a[i];
        if (d < -eps)
            a_led = true;
        else if (d > eps && a_led)
            return t[i];
    }
    return std::nullopt;
}

inline LocationStudy run_initial_location_study(const ScenarioConfig& c)
{
    if (c.placements.size() < 2)
        throw ConfigError("the initial_location study requires two placements");
    const auto g = build_scenario_graph(c);
    const auto model = build_scenario_model(c);
    const auto routing = build_scenario_routing(c, g);
    LocationStudy out;
    for (const auto& p : c.placements) {
        const auto s = build_initial_state(c, g, model, &p.seeds);
        out.names.push_back(p.name);
        out.series.push_back(integrate(build_initial_fluid(c, g, model, s), g, model, routing, c.horizon,
                                       c.sample_dt, integrate_options(c)));
    }
    const auto& a = out.series[0];
    const auto& b = out.series[1];
    out.crossover = crossover_time(a.times, a.rho, b.rho);
    for (std::size_t i = 0; i < a.samples(); ++i)
        out.max_difference = std::max(out.max_difference, std::abs(b.rho[i] - a.rho[i]));
    for (std::size_t i = 0; i < a.samples(); ++i) {
        const double d = b.rho[i] - a.rho[i];
        if (std::abs(d) > 1e-6) {
            out.first_leads_early = d < 0.0;
            break;
        }
    }
    return out;
}

/// Sequences for the trajectory study: synthesized on the stand-in (or a
/// configured graph with its table) or read from a CSV with region map.
inline std::vector<ClusterSequence> trajectory_sequences(const ScenarioConfig& c, const ClusterGraph& g,
                                                         std::vector<std::string>& warnings)
{
    const auto& ts = *c.trajectory;
    if (ts.source == "synthetic") {
        std::shared_ptr<MobilityTable> truth;
        if (c.mobility.law == RateLaw::tabulated && !c.mobility.table_file.empty()) {
            const auto rt = rate_table_from_json(read_json_file(c.resolve(c.mobility.table_file)));
            truth = std::make_shared<MobilityTable>(rt.to_mobility_table(double(ts.vehicles)));
        } else {
            truth = std::make_shared<MobilityTable>(us101_standin_table(ts.vehicles, ts.duration));
        }
        const auto model = MobilityModel::tabulated(truth);
        return synth_trajectories(g, model, RoutingTable::uniform(g), ts.vehicles, ts.duration, c.seed);
    }
    const auto records = read_trajectory_csv(c.resolve(ts.file), ColumnMapping::from_json(ts.mapping));
    const auto regions = RegionMap::from_json(read_json_file(c.resolve(ts.regions)));
    AssignOptions ao;
    ao.hysteresis = ts.hysteresis;
    auto res = assign_clusters(records, regions, &g, ao);
    if (res.flagged_records)
        warnings.push_back(std::to_string(res.flagged_records) + " records outside every region");
    if (res.dropped_vehicles)
        warnings.push_back(std::to_string(res.dropped_vehicles) + " vehicles never entered the study area");
    return std::move(res.sequences);
}

inline ClusterGraph trajectory_graph(const ScenarioConfig& c)
{
    const auto& ts = *c.trajectory;
    if (!ts.graph_file.empty())
        return graph_from_json(read_json_file(c.resolve(ts.graph_file)));
    if (ts.source == "synthetic")
        return us101_standin_graph();
    throw ConfigError("file trajectories need a graph_file");
}

/// Sequences -> extracted rates -> open-system ODE, against a replay
/// ensemble with exact seeding, for every beta value.
inline TrajectoryStudy run_trajectory_study(const ScenarioConfig& c)
{
    const auto& ts = *c.trajectory;
    const auto g = trajectory_graph(c);
    TrajectoryStudy out;
    const auto sequences = trajectory_sequences(c, g, out.warnings);
    out.vehicles = sequences.size();
    out.rates = extract_rates(sequences, g, ts.duration);
    const auto table = out.rates.to_mobility_table(double(sequences.size()), c.mobility.inflow);
    SeedSpec seed;
    seed.informed_count = std::min<std::int64_t>(ts.informed_count, std::int64_t(sequences.size()));
    for (double beta : ts.beta_values) {
        TrajectoryCase tc;
        tc.beta = beta;
        const auto gb = scale_beta(g, beta);
        const auto os = open_system_extend(gb, table, seed);
        tc.ode = integrate(os.x0, gb, os.model, RoutingTable::uniform(gb), ts.duration, c.sample_dt,
                           integrate_options(c));
        ReplayOptions ro;
        ro.beta_scale = beta;
        ro.informed_count = seed.informed_count;
        ro.horizon = ts.duration;
        ro.sample_dt = c.sample_dt;
        auto ens = replay_ensemble(sequences, g, ro, ts.runs, c.seed, c.worker_threads());
        for (auto& w : ens.warnings)
            out.warnings.push_back(w);
        tc.replay = std::move(ens.mean);
        tc.deviation = max_deviation(tc.replay, tc.ode);
        out.cases.push_back(std::move(tc));
    }
    return out;
}

struct BenchmarkRow {
    std::size_t clusters = 0;
    double seconds = 0.0;
    double final_rho = 0.0;
    std::size_t steps = 0;
};

/// Chain of J clusters with same-segment beta, uniform lambda, n vehicles
/// per cluster and 10% of the first cluster informed; ODE over the horizon.
inline BenchmarkRow run_benchmark_one(std::size_t J, double horizon = 200.0, double sample_dt = 1.0,
                                      double beta = 10.0, double lambda = 0.05, std::int64_t n = 50,
                                      const IntegrateOptions& opt = {})
{
    const auto g = build_chain(J, beta);
    const auto model = MobilityModel::uniform(lambda);
    const auto routing = RoutingTable::uniform(g);
    SystemState s(J);
    for (ClusterId j = 0; j < J; ++j)
        s.non_informed[j] = n;
    s.informed[0] = n / 10;
    s.non_informed[0] -= n / 10;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = solve(FluidState::from_counts(s, double(s.total())), g, model, routing, horizon, sample_dt, opt);
    const auto t1 = std::chrono::steady_clock::now();
    return {J, std::chrono::duration<double>(t1 - t0).count(), r.series.rho.back(), r.accepted + r.rejected};
}

inline std::vector<BenchmarkRow> run_benchmark(const std::vector<std::size_t>& J_values, double horizon = 200.0,
                                               double sample_dt = 1.0)
{
    std::vector<BenchmarkRow> rows;
    for (std::size_t J : J_values)
        rows.push_back(run_benchmark_one(J, horizon, sample_dt));
    return rows;
}

// ---------------------------------------------------------------------------
// Scenario runner

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s)
{
    std::ofstream os(p);
    if (!os)
        throw DataError("cannot write " + p.string());
    os << s;
}

inline void write_columns(const std::filesystem::path& p, const std::vector<double>& t,
                          const std::vector<std::pair<std::string, const std::vector<double>*>>& cols)
{
    std::ofstream os(p);
    if (!os)
        throw DataError("cannot write " + p.string());
    os << 't';
    for (const auto& c : cols)
        os << ',' << c.first;
    os << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) {
        os << format_double(t[i]);
        for (const auto& c : cols)
            os << ',' << format_double((*c.second)[i]);
        os << '\n';
    }
}

} // namespace detail

/// Runs the configured engines and case study. Artifacts go to out_dir
/// when it is non-empty; everything written is a function of the config.
inline ScenarioResult run_scenario(const ScenarioConfig& c, const std::string& out_dir = "")
{
    c.validate();
    if (c.engine == Engine::replay && c.case_study == CaseStudy::none) {
        auto t = c;
        t.case_study = CaseStudy::trajectory;
        return run_scenario(t, out_dir);
    }
    namespace fs = std::filesystem;
    ScenarioResult res;
    std::ostringstream report;
    report << "scenario " << c.name << '\n';
    const bool write = !out_dir.empty();
    if (write)
        fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    if (c.case_study == CaseStudy::initial_location) {
        auto study = run_initial_location_study(c);
        std::vector<std::pair<std::string, const std::vector<double>*>> cols;
        for (std::size_t i = 0; i < study.names.size(); ++i)
            cols.push_back({"rho_" + study.names[i], &study.series[i].rho});
        if (write)
            detail::write_columns(dir / "initial_location.csv", study.series[0].times, cols);
        res.metrics["first_leads_early"] = study.first_leads_early;
        res.metrics["crossover_time"] = study.crossover ? nlohmann::json(*study.crossover) : nlohmann::json();
        res.metrics["max_difference"] = study.max_difference;
        report << "placements " << study.names[0] << " vs " << study.names[1] << '\n'
               << study.names[0] << " leads early: " << (study.first_leads_early ? "yes" : "no") << '\n'
               << "crossover: "
               << (study.crossover ? "t = " + format_double(*study.crossover) + " s" : std::string("none")) << '\n';
        res.location = std::move(study);
    } else if (c.case_study == CaseStudy::trajectory) {
        auto study = run_trajectory_study(c);
        if (write)
            write_json_file((dir / "rates.json").string(), rate_table_to_json(study.rates));
        auto cases = nlohmann::json::array();
        report << "trajectory vehicles " << study.vehicles << ", duration " << format_double(study.rates.duration)
               << " s\n";
        for (const auto& tc : study.cases) {
            const std::string tag = "beta" + format_double(tc.beta);
            if (write) {
                write_series_csv((dir / ("ode_" + tag + ".csv")).string(), tc.ode);
                write_series_csv((dir / ("replay_" + tag + ".csv")).string(), tc.replay);
            }
            cases.push_back({{"beta", tc.beta}, {"max_deviation", tc.deviation}});
            report << "beta " << format_double(tc.beta) << ": replay vs ODE max deviation "
                   << format_double(tc.deviation) << '\n';
        }
        res.metrics["cases"] = cases;
        res.metrics["warnings"] = study.warnings;
        res.trajectory = std::move(study);
    } else if (c.case_study == CaseStudy::roadblock) {
        const auto base = build_scenario_graph(c);
        const auto model = build_scenario_model(c);
        const auto routing = build_scenario_routing(c, base);
        const auto init = build_initial_state(c, base, model);
        const auto x0 = build_initial_fluid(c, base, model, init);
        const double N = double(init.total());
        std::vector<std::pair<std::string, const std::vector<double>*>> cols;
        for (double beta : c.beta_sweep) {
            ClusterGraph g = base;
            set_same_segment_beta(g, beta);
            BetaCurve bc;
            bc.beta = beta;
            bc.series = integrate(x0, g, model, routing, c.horizon, c.sample_dt, integrate_options(c));
            bc.reach = cluster_reach(bc.series, g, c.metrics.reach_threshold, N, c.metrics.cumulative_reach);
            res.sweep.push_back(std::move(bc));
        }
        for (const auto& bc : res.sweep)
            cols.push_back({"reach_beta" + format_double(bc.beta), &bc.reach});
        if (write)
            detail::write_columns(dir / "roadblock_reach.csv", res.sweep.front().series.times, cols);
        bool ordered = true;
        for (std::size_t i = 1; i < res.sweep.size(); ++i)
            for (std::size_t t = 0; t < res.sweep[i].reach.size(); ++t) {
                const bool up = res.sweep[i].beta >= res.sweep[i - 1].beta;
                const double d = res.sweep[i].reach[t] - res.sweep[i - 1].reach[t];
                ordered = ordered && (up ? d >= 0.0 : d <= 0.0);
            }
        auto finals = nlohmann::json::array();
        for (const auto& bc : res.sweep) {
            finals.push_back({{"beta", bc.beta}, {"final_reach", bc.reach.back()}, {"final_rho", bc.series.rho.back()}});
            report << "beta " << format_double(bc.beta) << ": final reach " << format_double(bc.reach.back())
                   << ", final rho " << format_double(bc.series.rho.back()) << '\n';
        }
        res.metrics["sweep"] = finals;
        res.metrics["reach_ordered_by_beta"] = ordered;
        report << "reach ordered by beta: " << (ordered ? "yes" : "no") << '\n';
    } else {
        const auto g = build_scenario_graph(c);
        const auto model = build_scenario_model(c);
        const auto routing = build_scenario_routing(c, g);
        const auto init = build_initial_state(c, g, model);
        const double N = double(init.total());
        res.metrics["clusters"] = g.size();
        res.metrics["vehicles"] = init.total();
        report << "J = " << g.size() << ", N = " << init.total() << '\n';
        if (c.engine == Engine::ode || c.engine == Engine::both) {
            const auto r = solve(build_initial_fluid(c, g, model, init), g, model, routing, c.horizon, c.sample_dt,
                                 integrate_options(c));
            res.ode = r.series;
            res.metrics["ode_final_rho"] = r.series.rho.back();
            res.metrics["ode_mass_drift"] = r.mass_drift;
            if (write)
                write_series_csv((dir / "ode.csv").string(), r.series);
            report << "ode: final rho " << format_double(r.series.rho.back()) << '\n';
        }
        if (c.engine == Engine::ctmc || c.engine == Engine::both) {
            EnsembleOptions eo;
            eo.threads = c.worker_threads();
            res.ctmc = run_ensemble(g, model, routing, init, c.horizon, c.sample_dt, c.runs, c.seed, eo);
            res.metrics["ctmc_final_rho"] = res.ctmc->mean.rho.back();
            res.metrics["ctmc_rho_discrepancy"] = res.ctmc->rho_discrepancy;
            res.metrics["runs"] = c.runs;
            if (write)
                write_series_csv((dir / "ctmc_mean.csv").string(), res.ctmc->mean);
            report << "ctmc: " << c.runs << " runs, final mean rho " << format_double(res.ctmc->mean.rho.back())
                   << '\n';
        }
        if (res.ode && res.ctmc) {
            res.max_deviation = max_deviation(res.ctmc->mean, *res.ode);
            res.metrics["max_deviation"] = *res.max_deviation;
            report << "max deviation |rho_ctmc - rho_ode|: " << format_double(*res.max_deviation) << '\n';
        }
        const PropagationSeries& primary = res.ode ? *res.ode : res.ctmc->mean;
        if (!g.clusters_in(Region::cbd).empty()) {
            const auto cbd = region_fraction(primary, g, Region::cbd);
            res.metrics["cbd_fraction_final"] = cbd.back();
            if (write)
                detail::write_columns(dir / "cbd_fraction.csv", primary.times, {{"cbd_fraction", &cbd}});
        }
        if (c.case_study == CaseStudy::event) {
            const double nominal = primary.fractions ? N : 0.0;
            const auto base = initial_occupancy(primary, nominal);
            res.reach = cluster_reach(primary, g, c.metrics.reach_threshold, nominal, c.metrics.cumulative_reach);
            res.congestion = congestion_fraction(primary, g, base, c.metrics.congestion_pct, nominal);
            res.congestion_absolute =
                congestion_fraction_absolute(primary, g, base, c.metrics.congestion_increase, nominal);
            bool dominates = true;
            for (std::size_t t = 1; t < res.reach.size(); ++t)
                dominates = dominates && res.reach[t] >= res.congestion[t];
            if (write)
                detail::write_columns(dir / "event_reach.csv", primary.times,
                                      {{"reach", &res.reach},
                                       {"congestion_pct", &res.congestion},
                                       {"congestion_increase", &res.congestion_absolute}});
            res.metrics["reach_dominates_congestion"] = dominates;
            res.metrics["final_reach"] = res.reach.back();
            res.metrics["final_congestion"] = res.congestion.back();
            report << "information reach >= congestion fraction at every t > 0: " << (dominates ? "yes" : "no")
                   << '\n';
        }
    }
    res.report = report.str();
    if (write) {
        write_json_file((dir / "metrics.json").string(), res.metrics);
        detail::write_text(dir / "report.txt", res.report);
    }
    return res;
}

} // namespace infoprop
