#pragma once

#include "infoprop/error.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace infoprop {

/// Integer counts of informed / non-informed vehicles per cluster.
struct SystemState {
    std::vector<std::int64_t> informed;
    std::vector<std::int64_t> non_informed;

    SystemState() = default;
    explicit SystemState(std::size_t clusters) : informed(clusters, 0), non_informed(clusters, 0) {}

    std::size_t size() const noexcept { return informed.size(); }
    std::int64_t occupancy(std::size_t j) const { return informed[j] + non_informed[j]; }

    std::int64_t total() const
    {
        return std::accumulate(informed.begin(), informed.end(), std::int64_t{0}) +
               std::accumulate(non_informed.begin(), non_informed.end(), std::int64_t{0});
    }
    std::int64_t total_informed() const
    {
        return std::accumulate(informed.begin(), informed.end(), std::int64_t{0});
    }

    bool valid() const
    {
        if (informed.size() != non_informed.size())
            return false;
        for (std::size_t j = 0; j < size(); ++j)
            if (informed[j] < 0 || non_informed[j] < 0)
                return false;
        return true;
    }

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// Real-valued informed / non-informed fractions per cluster. Laid out as
/// the 2J vector (I_1..I_J, S_1..S_J) used by the drift.
struct FluidState {
    std::vector<double> informed;
    std::vector<double> non_informed;

    FluidState() = default;
    explicit FluidState(std::size_t clusters) : informed(clusters, 0.0), non_informed(clusters, 0.0) {}

    static FluidState from_counts(const SystemState& s, double total)
    {
        FluidState x(s.size());
        for (std::size_t j = 0; j < s.size(); ++j) {
            x.informed[j] = double(s.informed[j]) / total;
            x.non_informed[j] = double(s.non_informed[j]) / total;
        }
        return x;
    }

    static FluidState from_vector(const std::vector<double>& y)
    {
        const std::size_t J = y.size() / 2;
        FluidState x(J);
        std::copy(y.begin(), y.begin() + std::ptrdiff_t(J), x.informed.begin());
        std::copy(y.begin() + std::ptrdiff_t(J), y.end(), x.non_informed.begin());
        return x;
    }

    std::vector<double> to_vector() const
    {
        std::vector<double> y(informed);
        y.insert(y.end(), non_informed.begin(), non_informed.end());
        return y;
    }

    std::size_t size() const noexcept { return informed.size(); }
    double occupancy(std::size_t j) const { return informed[j] + non_informed[j]; }
    double mass() const
    {
        return std::accumulate(informed.begin(), informed.end(), 0.0) +
               std::accumulate(non_informed.begin(), non_informed.end(), 0.0);
    }
};

/// Time-stamped per-cluster counts (or fractions) with the informed
/// fraction rho(t) = sum_j I_j(t) / total.
struct PropagationSeries {
    std::vector<double> times;
    std::size_t clusters = 0;
    /// row-major samples x clusters
    std::vector<double> informed;
    std::vector<double> non_informed;
    std::vector<double> rho;
    bool fractions = false;
    /// Denominator of rho: N for counts, initial mass for fractions.
    double total = 0.0;

    std::size_t samples() const noexcept { return times.size(); }

    double I(std::size_t sample, std::size_t j) const { return informed[sample * clusters + j]; }
    double S(std::size_t sample, std::size_t j) const { return non_informed[sample * clusters + j]; }

    void push_sample(double t, const std::vector<double>& I, const std::vector<double>& S)
    {
        times.push_back(t);
        informed.insert(informed.end(), I.begin(), I.end());
        non_informed.insert(non_informed.end(), S.begin(), S.end());
        rho.push_back(std::accumulate(I.begin(), I.end(), 0.0) / total);
    }

    void push_sample(double t, const SystemState& s)
    {
        times.push_back(t);
        double inf = 0.0;
        for (std::size_t j = 0; j < clusters; ++j) {
            informed.push_back(double(s.informed[j]));
            non_informed.push_back(double(s.non_informed[j]));
            inf += double(s.informed[j]);
        }
        rho.push_back(inf / total);
    }

    /// Per-cluster quantity in vehicle units given a nominal N for
    /// fractional series.
    double informed_count(std::size_t sample, std::size_t j, double nominal_n) const
    {
        return fractions ? I(sample, j) * nominal_n : I(sample, j);
    }
    double occupancy_count(std::size_t sample, std::size_t j, double nominal_n) const
    {
        const double o = I(sample, j) + S(sample, j);
        return fractions ? o * nominal_n : o;
    }
};

/// Uniform sample instants 0, dt, 2dt, ... up to and including horizon.
inline std::vector<double> sample_grid(double horizon, double dt)
{
    if (!(horizon > 0.0) || !(dt > 0.0))
        throw ConfigError("horizon and sample_dt must be positive");
    std::vector<double> t;
    for (std::size_t i = 0;; ++i) {
        const double ti = double(i) * dt;
        if (ti > horizon * (1.0 + 1e-12))
            break;
        t.push_back(ti);
    }
    return t;
}

// ---------------------------------------------------------------------------
// CSV: header "t,rho,I_1..I_J,S_1..S_J"

inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_series_csv(std::ostream& os, const PropagationSeries& s)
{
    os << "t,rho";
    for (std::size_t j = 1; j <= s.clusters; ++j)
        os << ",I_" << j;
    for (std::size_t j = 1; j <= s.clusters; ++j)
        os << ",S_" << j;
    os << '\n';
    for (std::size_t i = 0; i < s.samples(); ++i) {
        os << format_double(s.times[i]) << ',' << format_double(s.rho[i]);
        for (std::size_t j = 0; j < s.clusters; ++j)
            os << ',' << format_double(s.I(i, j));
        for (std::size_t j = 0; j < s.clusters; ++j)
            os << ',' << format_double(s.S(i, j));
        os << '\n';
    }
}

inline void write_series_csv(const std::string& path, const PropagationSeries& s)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write " + path);
    write_series_csv(os, s);
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        out.push_back(cell);
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    for (auto& c : out) {
        while (!c.empty() && (c.back() == '\r' || c.back() == ' '))
            c.pop_back();
        while (!c.empty() && c.front() == ' ')
            c.erase(c.begin());
    }
    return out;
}

inline double parse_double(const std::string& s)
{
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DataError("not a number: '" + s + "'");
    return v;
}

/// Reads a series CSV. `fractions` and `total` are not stored in the file;
/// total is recovered from the first row when rho > 0.
inline PropagationSeries read_series_csv(std::istream& is, bool fractions = false)
{
    std::string line;
    if (!std::getline(is, line))
        throw DataError("empty series file");
    const auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "t" || header[1] != "rho" || (header.size() - 2) % 2 != 0)
        throw DataError("series header must be t,rho,I_1..I_J,S_1..S_J");
    PropagationSeries s;
    s.clusters = (header.size() - 2) / 2;
    s.fractions = fractions;
    while (std::getline(is, line)) {
        if (line.empty())
            continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("series row has wrong column count");
        s.times.push_back(parse_double(cells[0]));
        s.rho.push_back(parse_double(cells[1]));
        for (std::size_t j = 0; j < s.clusters; ++j)
            s.informed.push_back(parse_double(cells[2 + j]));
        for (std::size_t j = 0; j < s.clusters; ++j)
            s.non_informed.push_back(parse_double(cells[2 + s.clusters + j]));
    }
    if (s.samples() > 0) {
        double inf = 0.0, all = 0.0;
        for (std::size_t j = 0; j < s.clusters; ++j) {
            inf += s.I(0, j);
            all += s.I(0, j) + s.S(0, j);
        }
        s.total = s.rho[0] > 0.0 ? inf / s.rho[0] : all;
    }
    return s;
}

inline PropagationSeries read_series_csv(const std::string& path, bool fractions = false)
{
    std::ifstream is(path);
    if (!is)
        throw DataError("cannot read " + path);
    return read_series_csv(is, fractions);
}

} // namespace infoprop
