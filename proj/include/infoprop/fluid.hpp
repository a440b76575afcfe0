#pragma once

// Fluid limit: the drift of the clustered SI model and its numerical
// integration (Dormand-Prince 5(4) with dense output, or fixed-step RK4).

#include "infoprop/error.hpp"
#include "infoprop/rates.hpp"
#include "infoprop/state.hpp"
#include "infoprop/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <vector>

namespace infoprop {

/// Precomputed edge terms and communication links; evaluates the 2J drift
///   dI_j = -sum_k lambda^I_jk I_j + sum_k beta_kj I_k S_j + sum_k lambda^I_kj I_k
///   dS_j = -sum_k lambda^S_jk S_j - sum_k beta_kj I_k S_j + sum_k lambda^S_kj S_k
class DriftEvaluator {
public:
    DriftEvaluator(const ClusterGraph& g, const MobilityModel& model, const RoutingTable& routing)
        : model_(model), J_(g.size())
    {
        model.validate();
        for (const auto& e : g.edges()) {
            from_.push_back(e.from);
            to_.push_back(e.to);
            terms_.push_back(edge_rate_term(model, routing, g, e.from, e.to));
        }
        for (const auto& c : g.comm_links()) {
            comm_from_.push_back(c.from);
            comm_to_.push_back(c.to);
            beta_.push_back(c.beta);
        }
        scale_i_ = model.class_scale(VehicleClass::informed);
        scale_s_ = model.class_scale(VehicleClass::non_informed);
    }

    std::size_t dimension() const noexcept { return 2 * J_; }

    /// y = (I_1..I_J, S_1..S_J); dy has the same layout.
    void operator()(const double* y, double* dy) const
    {
        const double* I = y;
        const double* S = y + J_;
        double* dI = dy;
        double* dS = dy + J_;
        std::fill(dy, dy + 2 * J_, 0.0);
        for (std::size_t e = 0; e < from_.size(); ++e) {
            const std::size_t j = from_[e], k = to_[e];
            const double lam = evaluate_rate(terms_[e], model_, I[j] + S[j], I[k] + S[k]);
            const double fi = scale_i_ * lam * I[j];
            const double fs = scale_s_ * lam * S[j];
            dI[j] -= fi;
            dI[k] += fi;
            dS[j] -= fs;
            dS[k] += fs;
        }
        for (std::size_t c = 0; c < beta_.size(); ++c) {
            const std::size_t k = comm_from_[c], j = comm_to_[c];
            const double flow = beta_[c] * I[k] * S[j];
            dI[j] += flow;
            dS[j] -= flow;
        }
    }

    std::vector<double> operator()(const std::vector<double>& y) const
    {
        std::vector<double> dy(y.size());
        (*this)(y.data(), dy.data());
        return dy;
    }

private:
    const MobilityModel& model_;
    std::size_t J_;
    std::vector<std::size_t> from_, to_;
    std::vector<EdgeRateTerm> terms_;
    std::vector<std::size_t> comm_from_, comm_to_;
    std::vector<double> beta_;
    double scale_i_ = 1.0, scale_s_ = 1.0;
};

inline std::vector<double> drift(const FluidState& x, const ClusterGraph& g, const MobilityModel& model,
                                 const RoutingTable& routing)
{
    if (x.size() != g.size())
        throw ContractViolation("fluid state size does not match the graph");
    DriftEvaluator f(g, model, routing);
    return f(x.to_vector());
}

struct IntegrateOptions {
    /// relative and absolute per-step error target of the adaptive solver
    double tol = 1e-8;
    /// > 0 selects classical RK4 with this step instead of the adaptive pair
    double fixed_dt = 0.0;
    std::size_t max_steps = 50'000'000;
};

struct IntegrationResult {
    PropagationSeries series;
    /// most negative component seen at an output sample before clipping
    double min_component = 0.0;
    /// max over samples of |mass(t) - mass(0)|
    double mass_drift = 0.0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

namespace detail {

struct Dopri5 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                            a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
};

inline double rms_scaled(const std::vector<double>& v, const std::vector<double>& sc)
{
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double q = v[i] / sc[i];
        s += q * q;
    }
    return std::sqrt(s / double(std::max<std::size_t>(1, v.size())));
}

// Summed scaled error. Fractions live on the simplex, where errors in rho
// and mass add up over components; an averaged norm lets them grow with J.
inline double l1_scaled(const std::vector<double>& v, const std::vector<double>& sc)
{
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += std::abs(v[i]) / sc[i];
    return s;
}

inline std::string state_summary(const std::vector<double>& y)
{
    std::ostringstream os;
    double mn = std::numeric_limits<double>::infinity(), mx = -mn, sum = 0.0;
    for (double v : y) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
        sum += v;
    }
    os << "min=" << mn << " max=" << mx << " mass=" << sum;
    return os.str();
}

} // namespace detail

/// Integrates from x0 over [0, horizon], sampling every sample_dt.
inline IntegrationResult solve(const FluidState& x0, const ClusterGraph& g, const MobilityModel& model,
                               const RoutingTable& routing, double horizon, double sample_dt,
                               const IntegrateOptions& opt = {})
{
    if (x0.size() != g.size())
        throw ContractViolation("fluid state size does not match the graph");
    if (!(opt.tol > 0.0) && !(opt.fixed_dt > 0.0))
        throw ConfigError("tol must be positive");
    const auto grid = sample_grid(horizon, sample_dt);
    const DriftEvaluator f(g, model, routing);
    const std::size_t n = f.dimension();
    const std::size_t J = g.size();

    IntegrationResult res;
    PropagationSeries& out = res.series;
    out.clusters = J;
    out.fractions = true;
    out.total = x0.mass();
    if (!(out.total > 0.0))
        throw ConfigError("initial fluid state has zero mass");

    std::vector<double> ybuf_i(J), ybuf_s(J);
    auto record = [&](double t, const std::vector<double>& y) {
        double mass = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            res.min_component = std::min({res.min_component, y[j], y[J + j]});
            ybuf_i[j] = std::max(0.0, y[j]);
            ybuf_s[j] = std::max(0.0, y[J + j]);
            mass += y[j] + y[J + j];
        }
        res.mass_drift = std::max(res.mass_drift, std::abs(mass - out.total));
        out.push_sample(t, ybuf_i, ybuf_s);
    };

    std::vector<double> y = x0.to_vector();
    record(0.0, y);
    std::size_t next = 1;

    if (opt.fixed_dt > 0.0) {
        std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
        double t = 0.0;
        for (; next < grid.size(); ++next) {
            const double span = grid[next] - t;
            const auto steps = std::size_t(std::max(1.0, std::ceil(span / opt.fixed_dt - 1e-9)));
            const double h = span / double(steps);
            for (std::size_t s = 0; s < steps; ++s) {
                f(y.data(), k1.data());
                for (std::size_t i = 0; i < n; ++i)
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                f(tmp.data(), k2.data());
                for (std::size_t i = 0; i < n; ++i)
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                f(tmp.data(), k3.data());
                for (std::size_t i = 0; i < n; ++i)
                    tmp[i] = y[i] + h * k3[i];
                f(tmp.data(), k4.data());
                for (std::size_t i = 0; i < n; ++i)
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                ++res.accepted;
            }
            t = grid[next];
            record(t, y);
        }
        return res;
    }

    using C = detail::Dopri5;
    const double tol = opt.tol;
    const double t_end = grid.back();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y1(n), ys(n), err(n), sc(n);
    std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n), yd(n);
    auto scale = [&](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < n; ++i)
            sc[i] = tol + tol * std::max(std::abs(a[i]), std::abs(b[i]));
    };

    f(y.data(), k1.data());
    // initial step size (Hairer, Norsett & Wanner, "hinit")
    double h;
    {
        scale(y, y);
        const double d0 = detail::rms_scaled(y, sc);
        const double d1 = detail::rms_scaled(k1, sc);
        double h0 = (d0 < 1e-10 || d1 < 1e-10) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, t_end);
        for (std::size_t i = 0; i < n; ++i)
            y1[i] = y[i] + h0 * k1[i];
        f(y1.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i)
            err[i] = k2[i] - k1[i];
        const double d2 = detail::rms_scaled(err, sc) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        h = std::min({100.0 * h0, h1, t_end});
    }

    double t = 0.0;
    bool last_rejected = false;
    while (t < t_end) {
        if (res.accepted + res.rejected >= opt.max_steps)
            throw IntegrationFailure("step limit reached at t=" + std::to_string(t) + " (" +
                                         detail::state_summary(y) + ")",
                                     t);
        const double h_min = std::max(1e-14 * std::max(1.0, t_end), 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t));
        if (h < h_min)
            throw IntegrationFailure("step size underflow at t=" + std::to_string(t) + " (" +
                                         detail::state_summary(y) + ")",
                                     t);
        if (t + h > t_end)
            h = t_end - t;

        for (std::size_t i = 0; i < n; ++i)
            ys[i] = y[i] + h * C::a21 * k1[i];
        f(ys.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i)
            ys[i] = y[i] + h * (C::a31 * k1[i] + C::a32 * k2[i]);
        f(ys.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i)
            ys[i] = y[i] + h * (C::a41 * k1[i] + C::a42 * k2[i] + C::a43 * k3[i]);
        f(ys.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i)
            ys[i] = y[i] + h * (C::a51 * k1[i] + C::a52 * k2[i] + C::a53 * k3[i] + C::a54 * k4[i]);
        f(ys.data(), k5.data());
        for (std::size_t i = 0; i < n; ++i)
            ys[i] = y[i] + h * (C::a61 * k1[i] + C::a62 * k2[i] + C::a63 * k3[i] + C::a64 * k4[i] + C::a65 * k5[i]);
        f(ys.data(), k6.data());
        for (std::size_t i = 0; i < n; ++i)
            y1[i] = y[i] + h * (C::a71 * k1[i] + C::a73 * k3[i] + C::a74 * k4[i] + C::a75 * k5[i] + C::a76 * k6[i]);
        f(y1.data(), k7.data());
        for (std::size_t i = 0; i < n; ++i)
            err[i] = h * (C::e1 * k1[i] + C::e3 * k3[i] + C::e4 * k4[i] + C::e5 * k5[i] + C::e6 * k6[i] +
                          C::e7 * k7[i]);
        scale(y, y1);
        const double e = detail::l1_scaled(err, sc);

        if (!std::isfinite(e)) {
            ++res.rejected;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        double fac = e == 0.0 ? 5.0 : 0.9 * std::pow(e, -0.2);
        fac = std::clamp(fac, 0.2, 5.0);
        if (e > 1.0) {
            ++res.rejected;
            h *= std::min(fac, 1.0);
            last_rejected = true;
            continue;
        }

        // accepted: dense-output coefficients on [t, t + h]
        const double t_new = (t + h >= t_end * (1.0 - 1e-15)) ? t_end : t + h;
        bool need_dense = next < grid.size() && grid[next] <= t_new;
        if (need_dense) {
            for (std::size_t i = 0; i < n; ++i) {
                const double ydiff = y1[i] - y[i];
                const double bspl = h * k1[i] - ydiff;
                r1[i] = y[i];
                r2[i] = ydiff;
                r3[i] = bspl;
                r4[i] = ydiff - h * k7[i] - bspl;
                r5[i] = h * (C::d1 * k1[i] + C::d3 * k3[i] + C::d4 * k4[i] + C::d5 * k5[i] + C::d6 * k6[i] +
                             C::d7 * k7[i]);
            }
            while (next < grid.size() && grid[next] <= t_new) {
                if (grid[next] == t_new) {
                    record(grid[next], y1);
                } else {
                    const double th = (grid[next] - t) / h;
                    const double th1 = 1.0 - th;
                    for (std::size_t i = 0; i < n; ++i)
                        yd[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
                    record(grid[next], yd);
                }
                ++next;
            }
        }
        y.swap(y1);
        k1.swap(k7);
        t = t_new;
        ++res.accepted;
        if (last_rejected)
            fac = std::min(fac, 1.0);
        last_rejected = false;
        h *= fac;
    }
    while (next < grid.size()) {
        record(grid[next], y);
        ++next;
    }
    return res;
}

inline PropagationSeries integrate(const FluidState& x0, const ClusterGraph& g, const MobilityModel& model,
                                   const RoutingTable& routing, double horizon, double sample_dt,
                                   const IntegrateOptions& opt = {})
{
    return solve(x0, g, model, routing, horizon, sample_dt, opt).series;
}

// ---------------------------------------------------------------------------
// Open systems

struct SeedSpec {
    /// fraction of reservoir vehicles that enter informed
    double informed_fraction = 0.0;
    /// exact count out of the table's nominal N; overrides the fraction
    std::optional<std::int64_t> informed_count;
    /// initial study-area occupancy (fractions of N, informed / non-informed);
    /// empty means the study area starts empty
    std::optional<FluidState> study;
};

struct OpenSystem {
    FluidState x0;
    MobilityModel model;
    /// reservoir mass per entry cluster
    std::vector<std::pair<ClusterId, double>> reservoirs;
};

inline double seed_fraction(const SeedSpec& seed, double nominal_n)
{
    double frac = seed.informed_fraction;
    if (seed.informed_count) {
        if (*seed.informed_count < 0 || double(*seed.informed_count) > nominal_n)
            throw ConfigError("informed count outside [0, N]");
        frac = double(*seed.informed_count) / nominal_n;
    }
    if (!(frac >= 0.0 && frac <= 1.0))
        throw ConfigError("informed fraction outside [0, 1]");
    return frac;
}

/// Places the reservoir mass in the entry clusters, split in proportion to
/// each entry cluster's total inflow rate, with the seeded informed share.
inline OpenSystem open_system_extend(const ClusterGraph& g, const MobilityTable& table, const SeedSpec& seed)
{
    const auto entries = g.clusters_in(Region::virtual_entry);
    if (entries.empty() || g.clusters_in(Region::virtual_exit).empty())
        throw ConfigError("open system needs virtual entry and exit clusters");
    if (!(table.nominal_n > 0.0))
        throw ConfigError("rate table has no nominal N");
    const double frac = seed_fraction(seed, table.nominal_n);

    std::vector<double> inflow(g.size(), 0.0);
    double total_inflow = 0.0;
    for (const auto& [edge, rate] : table.entry) {
        if (edge.first >= g.size() || g.region(edge.first) != Region::virtual_entry)
            throw ConfigError("entry rate on a non-entry cluster");
        inflow[edge.first] += rate;
        total_inflow += rate;
    }
    if (!(total_inflow > 0.0))
        throw ConfigError("rate table has no entry rates");

    OpenSystem out;
    out.x0 = FluidState(g.size());
    double study_mass = 0.0;
    if (seed.study) {
        if (seed.study->size() != g.size())
            throw ConfigError("study occupancy has the wrong size");
        for (ClusterId j = 0; j < g.size(); ++j) {
            if (is_virtual(g.region(j)))
                continue;
            out.x0.informed[j] = seed.study->informed[j];
            out.x0.non_informed[j] = seed.study->non_informed[j];
            study_mass += seed.study->occupancy(j);
        }
    }
    const double reservoir = 1.0 - study_mass;
    if (reservoir < 0.0)
        throw ConfigError("study occupancy exceeds the total mass");
    for (ClusterId i : entries) {
        const double m = reservoir * inflow[i] / total_inflow;
        out.x0.informed[i] = frac * m;
        out.x0.non_informed[i] = (1.0 - frac) * m;
        out.reservoirs.push_back({i, m});
    }
    out.model = MobilityModel::tabulated(std::make_shared<MobilityTable>(table));
    return out;
}

/// Integer counterpart for the CTMC: reservoir counts by largest remainder,
/// informed vehicles spread the same way.
inline SystemState open_system_counts(const ClusterGraph& g, const MobilityTable& table, const SeedSpec& seed)
{
    const OpenSystem os = open_system_extend(g, table, seed);
    const auto n = std::int64_t(std::llround(table.nominal_n));
    const double frac = seed_fraction(seed, table.nominal_n);
    auto largest_remainder = [&](std::int64_t total, const std::vector<double>& weights) {
        std::vector<std::int64_t> out(weights.size(), 0);
        double wsum = 0.0;
        for (double w : weights)
            wsum += w;
        if (wsum <= 0.0)
            return out;
        std::vector<std::pair<double, std::size_t>> rem;
        std::int64_t used = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            const double exact = double(total) * weights[i] / wsum;
            out[i] = std::int64_t(std::floor(exact));
            used += out[i];
            rem.push_back({exact - double(out[i]), i});
        }
        std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; used < total; ++r, ++used)
            ++out[rem[r % rem.size()].second];
        return out;
    };

    SystemState s(g.size());
    std::int64_t study = 0;
    if (seed.study)
        for (ClusterId j = 0; j < g.size(); ++j) {
            if (is_virtual(g.region(j)))
                continue;
            s.informed[j] = std::llround(seed.study->informed[j] * table.nominal_n);
            s.non_informed[j] = std::llround(seed.study->non_informed[j] * table.nominal_n);
            study += s.occupancy(j);
        }
    std::vector<double> w;
    for (const auto& r : os.reservoirs)
        w.push_back(r.second);
    const std::int64_t reservoir = n - study;
    const auto counts = largest_remainder(reservoir, w);
    const std::int64_t informed_total =
        seed.informed_count ? *seed.informed_count : std::llround(frac * double(reservoir));
    const auto informed = largest_remainder(informed_total, w);
    for (std::size_t r = 0; r < os.reservoirs.size(); ++r) {
        const ClusterId i = os.reservoirs[r].first;
        s.informed[i] = std::min(informed[r], counts[r]);
        s.non_informed[i] = counts[r] - s.informed[i];
    }
    return s;
}

} // namespace infoprop
