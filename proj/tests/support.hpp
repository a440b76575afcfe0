#pragma once

// Test helpers: library objects built from oracle instances, and the 6x6
// validation grid.

#include "infoprop/ctmc.hpp"
#include "infoprop/fluid.hpp"
#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

using namespace infoprop;

inline ClusterGraph to_graph(const oracle::Instance& in)
{
    ClusterGraph g(std::size_t(in.J));
    for (int j = 0; j < in.J; ++j) {
        g.set_center(ClusterId(j), {in.cx[j], in.cy[j]});
        g.set_region(ClusterId(j), in.cbd[j] ? Region::cbd : Region::periphery);
        g.set_segment(ClusterId(j), std::size_t(j));
        for (int k = 0; k < in.J; ++k) {
            if (in.adj[j][k])
                g.add_mobility_edge(ClusterId(j), ClusterId(k));
            if (in.beta[j][k] > 0.0)
                g.set_beta(ClusterId(j), ClusterId(k), in.beta[j][k]);
        }
    }
    return g;
}

inline MobilityModel to_model(const oracle::Instance& in)
{
    switch (in.law) {
    case oracle::Law::uniform: return MobilityModel::uniform(in.lambda);
    case oracle::Law::two_level: return MobilityModel::two_level(in.lambda_d, in.lambda_o);
    case oracle::Law::density: return MobilityModel::density_dependent(in.lambda, in.a, in.b);
    }
    return {};
}

/// Random integer state with total in [1, 20].
inline SystemState random_counts(const oracle::Instance& in, std::mt19937_64& rng)
{
    SystemState s(std::size_t(in.J));
    const int N = 1 + int(rng() % 20);
    for (int v = 0; v < N; ++v) {
        const std::size_t j = rng() % std::size_t(in.J);
        (rng() % 2 ? s.informed[j] : s.non_informed[j])++;
    }
    return s;
}

/// Library transitions aggregated by jump vector, for comparison with
/// N * f(k / N, h).
inline std::map<oracle::Jump, double> library_jump_rates(const std::vector<Transition>& ts, int J)
{
    std::map<oracle::Jump, double> out;
    for (const auto& t : ts) {
        oracle::Jump h(2 * std::size_t(J), 0);
        const int j = int(t.j), k = int(t.k);
        switch (t.kind) {
        case TransitionKind::move_informed: h[j] = -1; h[k] = 1; break;
        case TransitionKind::move_non_informed: h[J + j] = -1; h[J + k] = 1; break;
        case TransitionKind::inform: h[k] = 1; h[J + k] = -1; break;
        }
        out[h] += t.rate;
    }
    return out;
}

/// Largest relative mismatch between two jump-rate maps; zero rates on
/// either side are allowed to be absent on the other.
inline double rate_map_mismatch(const std::map<oracle::Jump, double>& a, const std::map<oracle::Jump, double>& b)
{
    double worst = 0.0;
    auto check = [&](const auto& x, const auto& y) {
        for (const auto& [h, r] : x) {
            auto it = y.find(h);
            const double other = it == y.end() ? 0.0 : it->second;
            worst = std::max(worst, std::abs(r - other) / std::max(1.0, std::abs(r)));
        }
    };
    check(a, b);
    check(b, a);
    return worst;
}

struct Grid6 {
    ClusterGraph g{1};
    RoutingTable routing{1.0, {}};
    SystemState init{0};
};

/// 6x6 grid, CBD [2,2]-[3,3], same-segment beta, n vehicles per cluster and
/// 10% of n informed in the eastbound cluster leaving (0, 0).
inline Grid6 grid6(std::int64_t n, double gamma = 1.0, double beta = 3.0)
{
    Grid6 out;
    GridOptions o;
    o.same_segment_beta = beta;
    out.g = build_grid(6, 6, {2, 2, 3, 3}, o);
    out.routing = routing_probabilities(out.g, gamma);
    out.init = SystemState(out.g.size());
    for (ClusterId j = 0; j < out.g.size(); ++j)
        out.init.non_informed[j] = n;
    const ClusterId c0 = GridLayout{6, 6}.cluster(0, 0, Axis::horizontal, true);
    out.init.informed[c0] = n / 10;
    out.init.non_informed[c0] -= n / 10;
    return out;
}

/// One-sample Kolmogorov-Smirnov statistic against Exponential(rate).
inline double ks_exponential(std::vector<double> xs, double rate)
{
    std::sort(xs.begin(), xs.end());
    const double n = double(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = 1.0 - std::exp(-rate * xs[i]);
        d = std::max({d, double(i + 1) / n - F, F - double(i) / n});
    }
    return d;
}

/// Asymptotic KS critical value at alpha = 0.01.
inline double ks_critical_01(std::size_t n) { return 1.6276 / std::sqrt(double(n)); }

} // namespace testing
