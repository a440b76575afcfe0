#pragma once

// Series metrics: informed fraction, deviation between series, cluster
// reach, congestion, and per-segment export.

#include "infoprop/error.hpp"
#include "infoprop/state.hpp"
#include "infoprop/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <vector>

namespace infoprop {

/// rho_t = sum_j I_tj / sum_j (I_tj + S_tj). With an open graph the
/// denominator is the fixed total mass of the series instead.
inline std::vector<double> informed_fraction(const PropagationSeries& s, const ClusterGraph* g = nullptr)
{
    if (s.samples() == 0)
        throw DataError("informed_fraction of an empty series");
    const bool open = g && g->is_open();
    std::vector<double> rho(s.samples());
    for (std::size_t t = 0; t < s.samples(); ++t) {
        double inf = 0.0, all = 0.0;
        for (std::size_t j = 0; j < s.clusters; ++j) {
            inf += s.I(t, j);
            all += s.I(t, j) + s.S(t, j);
        }
        const double denom = open ? s.total : all;
        if (!(denom > 0.0))
            throw DataError("informed_fraction: zero denominator at sample " + std::to_string(t));
        rho[t] = inf / denom;
    }
    return rho;
}

/// Piecewise-linear value of (times, values) at t; t must lie in range.
inline double interpolate(const std::vector<double>& times, const std::vector<double>& values, double t)
{
    auto it = std::lower_bound(times.begin(), times.end(), t);
    if (it == times.end())
        return values.back();
    const std::size_t i = std::size_t(it - times.begin());
    if (*it == t || i == 0)
        return values[i];
    const double t0 = times[i - 1], t1 = times[i];
    const double w = (t - t0) / (t1 - t0);
    return values[i - 1] + w * (values[i] - values[i - 1]);
}

/// max |a(t) - b(t)| over the common time range. Identical grids compare
/// samplewise; otherwise both curves are evaluated by linear interpolation
/// on the union of their sample instants inside the overlap.
inline double max_deviation(const std::vector<double>& ta, const std::vector<double>& a, const std::vector<double>& tb,
                            const std::vector<double>& b)
{
    if (ta.size() != a.size() || tb.size() != b.size())
        throw ContractViolation("time and value vectors differ in length");
    if (ta.empty() || tb.empty())
        throw DataError("max_deviation of an empty series");
    double dev = 0.0;
    if (ta == tb) {
        for (std::size_t i = 0; i < a.size(); ++i)
            dev = std::max(dev, std::abs(a[i] - b[i]));
        return dev;
    }
    const double lo = std::max(ta.front(), tb.front()), hi = std::min(ta.back(), tb.back());
    if (lo > hi)
        throw DataError("series do not overlap in time");
    std::vector<double> grid;
    for (double t : ta)
        if (t >= lo && t <= hi)
            grid.push_back(t);
    for (double t : tb)
        if (t >= lo && t <= hi)
            grid.push_back(t);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (double t : grid)
        dev = std::max(dev, std::abs(interpolate(ta, a, t) - interpolate(tb, b, t)));
    return dev;
}

inline double max_deviation(const PropagationSeries& a, const PropagationSeries& b)
{
    return max_deviation(a.times, a.rho, b.times, b.rho);
}

/// Vehicles per cluster at a sample in vehicle units.
inline double informed_vehicles(const PropagationSeries& s, std::size_t t, std::size_t j, double nominal_n)
{
    if (s.fractions && !(nominal_n > 0.0))
        throw ConfigError("fractional series need a nominal N");
    return s.informed_count(t, j, nominal_n);
}

/// Fraction of non-virtual clusters whose informed count reaches
/// `threshold` vehicles (I_j * N for fractional series). With `ever` a
/// cluster counts from the first sample it reached the threshold on.
inline std::vector<double> cluster_reach(const PropagationSeries& s, const ClusterGraph& g, double threshold = 1.0,
                                         double nominal_n = 0.0, bool ever = false)
{
    if (s.clusters != g.size())
        throw ContractViolation("series and graph differ in cluster count");
    std::vector<ClusterId> study;
    for (ClusterId j = 0; j < g.size(); ++j)
        if (!is_virtual(g.region(j)))
            study.push_back(j);
    std::vector<double> out(s.samples(), 0.0);
    if (study.empty())
        return out;
    std::vector<char> reached(study.size(), 0);
    for (std::size_t t = 0; t < s.samples(); ++t) {
        std::size_t hit = 0;
        for (std::size_t i = 0; i < study.size(); ++i) {
            const bool now = informed_vehicles(s, t, study[i], nominal_n) >= threshold;
            reached[i] = char(now || (ever && reached[i]));
            hit += reached[i] != 0;
        }
        out[t] = double(hit) / double(study.size());
    }
    return out;
}

namespace detail {

template <class Pred>
std::vector<double> congestion_impl(const PropagationSeries& s, const ClusterGraph& g,
                                    const std::vector<double>& baseline, double nominal_n, Pred exceeds)
{
    if (baseline.size() != s.clusters || s.clusters != g.size())
        throw ContractViolation("baseline, series and graph differ in cluster count");
    if (s.fractions && !(nominal_n > 0.0))
        throw ConfigError("fractional series need a nominal N");
    std::vector<ClusterId> study;
    for (ClusterId j = 0; j < g.size(); ++j)
        if (!is_virtual(g.region(j)))
            study.push_back(j);
    std::vector<double> out(s.samples(), 0.0);
    if (study.empty())
        return out;
    for (std::size_t t = 0; t < s.samples(); ++t) {
        std::size_t hit = 0;
        for (ClusterId j : study)
            hit += exceeds(s.occupancy_count(t, j, nominal_n), baseline[j]);
        out[t] = double(hit) / double(study.size());
    }
    return out;
}

} // namespace detail

/// Fraction of clusters with occupancy above baseline_j * (1 + pct/100).
inline std::vector<double> congestion_fraction(const PropagationSeries& s, const ClusterGraph& g,
                                               const std::vector<double>& baseline, double pct,
                                               double nominal_n = 0.0)
{
    const double factor = 1.0 + pct / 100.0;
    return detail::congestion_impl(s, g, baseline, nominal_n,
                                   [factor](double occ, double base) { return occ > base * factor; });
}

/// Fraction of clusters whose occupancy grew by at least `increase`
/// vehicles over the baseline.
inline std::vector<double> congestion_fraction_absolute(const PropagationSeries& s, const ClusterGraph& g,
                                                        const std::vector<double>& baseline, double increase = 1.0,
                                                        double nominal_n = 0.0)
{
    return detail::congestion_impl(s, g, baseline, nominal_n,
                                   [increase](double occ, double base) { return occ - base >= increase; });
}

/// Per-cluster occupancy at sample 0, the usual congestion baseline.
inline std::vector<double> initial_occupancy(const PropagationSeries& s, double nominal_n = 0.0)
{
    std::vector<double> b(s.clusters);
    for (std::size_t j = 0; j < s.clusters; ++j)
        b[j] = s.occupancy_count(0, j, nominal_n);
    return b;
}

/// Share of all vehicles located in clusters of region r.
inline std::vector<double> region_fraction(const PropagationSeries& s, const ClusterGraph& g, Region r)
{
    std::vector<double> out(s.samples(), 0.0);
    for (std::size_t t = 0; t < s.samples(); ++t) {
        double in = 0.0, all = 0.0;
        for (std::size_t j = 0; j < s.clusters; ++j) {
            const double o = s.I(t, j) + s.S(t, j);
            all += o;
            if (g.region(j) == r)
                in += o;
        }
        out[t] = all > 0.0 ? in / all : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct SegmentRecord {
    std::size_t segment;
    double informed;
    double total;
    double thickness_informed;
    double thickness_total;
};

/// Aggregates clusters per segment at the last sample with time <= t.
inline std::vector<SegmentRecord> export_geographic(const PropagationSeries& s, const ClusterGraph& g, double t,
                                                    double unit_width = 1.0, double nominal_n = 0.0)
{
    if (s.samples() == 0 || t < s.times.front() || t > s.times.back())
        throw ConfigError("export time outside the series range");
    if (s.fractions && !(nominal_n > 0.0))
        throw ConfigError("fractional series need a nominal N");
    auto it = std::upper_bound(s.times.begin(), s.times.end(), t);
    const std::size_t i = std::size_t(it - s.times.begin()) - 1;
    std::map<std::size_t, SegmentRecord> seg;
    for (ClusterId j = 0; j < g.size(); ++j) {
        if (is_virtual(g.region(j)))
            continue;
        auto& r = seg.try_emplace(g.segment(j), SegmentRecord{g.segment(j), 0, 0, 0, 0}).first->second;
        r.informed += s.informed_count(i, j, nominal_n);
        r.total += s.occupancy_count(i, j, nominal_n);
    }
    std::vector<SegmentRecord> out;
    for (auto& [id, r] : seg) {
        r.thickness_informed = r.informed * unit_width;
        r.thickness_total = r.total * unit_width;
        out.push_back(r);
    }
    return out;
}

inline void write_geographic_csv(std::ostream& os, const std::vector<SegmentRecord>& recs, const ClusterGraph& g)
{
    os << "segment,center_x,center_y,informed,total,thickness_informed,thickness_total\n";
    std::map<std::size_t, Point> center;
    for (ClusterId j = 0; j < g.size(); ++j)
        center.try_emplace(g.segment(j), g.center(j));
    for (const auto& r : recs) {
        const Point c = center[r.segment];
        os << r.segment << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
           << format_double(r.informed) << ',' << format_double(r.total) << ','
           << format_double(r.thickness_informed) << ',' << format_double(r.thickness_total) << '\n';
    }
}

} // namespace infoprop
