#pragma once

// Per-edge mobility rates lambda_jk(x) under the uniform, two-level,
// density-dependent and tabulated laws, plus empirical bound/Lipschitz
// diagnostics on the simplex.

#include "infoprop/error.hpp"
#include "infoprop/random.hpp"
#include "infoprop/state.hpp"
#include "infoprop/topology.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>

namespace infoprop {

enum class RateLaw { uniform, two_level, density_dependent, tabulated };

inline std::string_view to_string(RateLaw law)
{
    switch (law) {
    case RateLaw::uniform: return "uniform";
    case RateLaw::two_level: return "two_level";
    case RateLaw::density_dependent: return "density_dependent";
    case RateLaw::tabulated: return "tabulated";
    }
    return "uniform";
}

inline RateLaw rate_law_from_string(std::string_view s)
{
    if (s == "uniform") return RateLaw::uniform;
    if (s == "two_level" || s == "two-level") return RateLaw::two_level;
    if (s == "density_dependent" || s == "density-dependent" || s == "density") return RateLaw::density_dependent;
    if (s == "tabulated") return RateLaw::tabulated;
    throw ConfigError("unknown mobility law '" + std::string(s) + "'");
}

/// How a virtual entry cluster releases vehicles.
///   constant:  aggregate inflow lambda~_ij while the reservoir holds at least
///              one vehicle (per-vehicle rate lambda~_ij / (N * max(x_i, 1/N)));
///   reservoir: per-vehicle rate lambda~_ij / N, so inflow decays with the
///              reservoir.
enum class EntryInflow { constant, reservoir };

enum class VehicleClass { informed, non_informed };

using EdgeKey = std::pair<ClusterId, ClusterId>;

/// Rates measured from trajectories.
struct MobilityTable {
    /// per-vehicle rate lambda_jk (1/s) for edges leaving non-entry clusters
    std::map<EdgeKey, double> rates;
    /// aggregate entry rate lambda~_ij (vehicles/s) for edges leaving
    /// virtual entry clusters
    std::map<EdgeKey, double> entry;
    double nominal_n = 0.0;
    EntryInflow inflow = EntryInflow::constant;
};

struct MobilityModel {
    RateLaw law = RateLaw::uniform;
    double lambda = 0.1;
    double lambda_d = 0.1;
    double lambda_o = 0.1;
    double a = 1.0;
    double b = 1.0;
    std::shared_ptr<const MobilityTable> table;
    /// When set, informed vehicles move at informed_scale times the
    /// non-informed rate.
    bool distinguish_informed = false;
    double informed_scale = 1.0;

    static MobilityModel uniform(double lambda)
    {
        MobilityModel m;
        m.law = RateLaw::uniform;
        m.lambda = lambda;
        return m;
    }

    static MobilityModel two_level(double lambda_d, double lambda_o)
    {
        MobilityModel m;
        m.law = RateLaw::two_level;
        m.lambda_d = lambda_d;
        m.lambda_o = lambda_o;
        return m;
    }

    static MobilityModel density_dependent(double lambda, double a, double b)
    {
        MobilityModel m;
        m.law = RateLaw::density_dependent;
        m.lambda = lambda;
        m.a = a;
        m.b = b;
        return m;
    }

    static MobilityModel tabulated(std::shared_ptr<const MobilityTable> table)
    {
        MobilityModel m;
        m.law = RateLaw::tabulated;
        m.table = std::move(table);
        return m;
    }

    void validate() const
    {
        auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
        switch (law) {
        case RateLaw::uniform:
            if (!finite_nonneg(lambda))
                throw ConfigError("lambda must be finite and non-negative");
            break;
        case RateLaw::two_level:
            if (!finite_nonneg(lambda_d) || !finite_nonneg(lambda_o))
                throw ConfigError("lambda_d and lambda_o must be finite and non-negative");
            break;
        case RateLaw::density_dependent:
            if (!finite_nonneg(lambda))
                throw ConfigError("lambda must be finite and non-negative");
            if (!(a >= 1.0) || !(b >= 1.0) || !std::isfinite(a) || !std::isfinite(b))
                throw ConfigError("density-dependent law requires a >= 1 and b >= 1");
            break;
        case RateLaw::tabulated:
            if (!table)
                throw ConfigError("tabulated law requires a rate table");
            for (const auto& [k, v] : table->rates)
                if (!finite_nonneg(v))
                    throw ConfigError("tabulated rates must be finite and non-negative");
            for (const auto& [k, v] : table->entry)
                if (!finite_nonneg(v))
                    throw ConfigError("entry rates must be finite and non-negative");
            if (!table->entry.empty() && !(table->nominal_n > 0.0))
                throw ConfigError("entry rates need a positive nominal N");
            break;
        }
        if (distinguish_informed && !finite_nonneg(informed_scale))
            throw ConfigError("informed_scale must be finite and non-negative");
    }

    /// Rates depend on the current occupancy.
    bool state_dependent() const
    {
        if (law == RateLaw::density_dependent)
            return true;
        return law == RateLaw::tabulated && table && !table->entry.empty() &&
               table->inflow == EntryInflow::constant;
    }

    double class_scale(VehicleClass c) const
    {
        return (distinguish_informed && c == VehicleClass::informed) ? informed_scale : 1.0;
    }
};

enum class RateKind { constant, density, entry_inflow };

/// State-independent part of an edge rate; `evaluate_rate` applies the
/// occupancy dependence. Engines cache one term per edge.
struct EdgeRateTerm {
    double base = 0.0;
    RateKind kind = RateKind::constant;
    /// lower bound on source occupancy for entry_inflow terms (1/N)
    double floor = 0.0;
};

inline EdgeRateTerm edge_rate_term(const MobilityModel& model, const RoutingTable& routing,
                                   const ClusterGraph& g, ClusterId j, ClusterId k)
{
    if (!g.has_edge(j, k))
        throw ContractViolation("edge_rate requires a mobility edge " + std::to_string(j) + "->" +
                                std::to_string(k));
    switch (model.law) {
    case RateLaw::uniform:
        return {routing.p(j, k) * model.lambda, RateKind::constant, 0.0};
    case RateLaw::two_level: {
        const double lj = g.region(j) == Region::cbd ? model.lambda_d : model.lambda_o;
        return {routing.p(j, k) * lj, RateKind::constant, 0.0};
    }
    case RateLaw::density_dependent:
        return {model.lambda * routing.p(j, k), RateKind::density, 0.0};
    case RateLaw::tabulated: {
        const auto& t = *model.table;
        if (g.region(j) == Region::virtual_entry) {
            auto it = t.entry.find({j, k});
            const double per_vehicle = it == t.entry.end() ? 0.0 : it->second / t.nominal_n;
            if (t.inflow == EntryInflow::constant)
                return {per_vehicle, RateKind::entry_inflow, 1.0 / t.nominal_n};
            return {per_vehicle, RateKind::constant, 0.0};
        }
        auto it = t.rates.find({j, k});
        return {it == t.rates.end() ? 0.0 : it->second, RateKind::constant, 0.0};
    }
    }
    return {};
}

/// occ_j, occ_k are the fractions I+S of the source and target cluster.
inline double evaluate_rate(const EdgeRateTerm& term, const MobilityModel& model, double occ_j, double occ_k)
{
    switch (term.kind) {
    case RateKind::constant:
        return term.base;
    case RateKind::density: {
        const double density = std::max(0.0, occ_j + occ_k);
        // floored at 0: transient overshoot can push the density past 1
        const double bracket = std::max(0.0, 1.0 - std::pow(density, model.a));
        return term.base * std::pow(bracket, model.b);
    }
    case RateKind::entry_inflow:
        return term.base / std::max(occ_j, term.floor);
    }
    return 0.0;
}

inline double edge_rate(const MobilityModel& model, const RoutingTable& routing, const ClusterGraph& g,
                        ClusterId j, ClusterId k, const FluidState& x,
                        VehicleClass cls = VehicleClass::non_informed)
{
    const EdgeRateTerm term = edge_rate_term(model, routing, g, j, k);
    return model.class_scale(cls) * evaluate_rate(term, model, x.occupancy(j), x.occupancy(k));
}

// ---------------------------------------------------------------------------

struct RateDiagnostics {
    double sup_rate = 0.0;
    /// max |lambda_jk(x) - lambda_jk(y)| / |x - y|_2 over edges and samples
    double lipschitz_estimate = 0.0;
};

/// Point on the 2J simplex drawn from a symmetric Dirichlet(1).
inline FluidState sample_simplex(std::size_t clusters, Rng& rng)
{
    std::vector<double> y(2 * clusters);
    double sum = 0.0;
    for (auto& v : y) {
        v = rng.exponential(1.0);
        sum += v;
    }
    for (auto& v : y)
        v /= sum;
    return FluidState::from_vector(y);
}

inline RateDiagnostics rate_diagnostics(const MobilityModel& model, const RoutingTable& routing,
                                        const ClusterGraph& g, std::size_t sample_count, std::uint64_t seed)
{
    if (sample_count < 2)
        throw ConfigError("rate_diagnostics needs at least 2 samples");
    model.validate();
    Rng rng(seed);
    const auto edges = g.edges();
    std::vector<EdgeRateTerm> terms;
    terms.reserve(edges.size());
    for (const auto& e : edges)
        terms.push_back(edge_rate_term(model, routing, g, e.from, e.to));

    RateDiagnostics d;
    const double scale = std::max(model.class_scale(VehicleClass::informed), 1.0);
    for (std::size_t s = 0; s < sample_count; ++s) {
        const FluidState x = sample_simplex(g.size(), rng);
        const FluidState y = sample_simplex(g.size(), rng);
        double dist2 = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double di = x.informed[j] - y.informed[j];
            const double ds = x.non_informed[j] - y.non_informed[j];
            dist2 += di * di + ds * ds;
        }
        const double dist = std::sqrt(dist2);
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [j, k] = edges[e];
            const double rx = scale * evaluate_rate(terms[e], model, x.occupancy(j), x.occupancy(k));
            const double ry = scale * evaluate_rate(terms[e], model, y.occupancy(j), y.occupancy(k));
            d.sup_rate = std::max({d.sup_rate, rx, ry});
            if (dist > 0.0)
                d.lipschitz_estimate = std::max(d.lipschitz_estimate, std::abs(rx - ry) / dist);
        }
    }
    return d;
}

} // namespace infoprop
