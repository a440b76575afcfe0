#pragma once

// Exact simulation of the density-dependent CTMC: transition enumeration,
// a single Gillespie step, a sum-tree event engine, and seeded ensembles.

#include "infoprop/error.hpp"
#include "infoprop/parallel.hpp"
#include "infoprop/random.hpp"
#include "infoprop/rates.hpp"
#include "infoprop/state.hpp"
#include "infoprop/topology.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace infoprop {

enum class TransitionKind { move_informed, move_non_informed, inform };

struct Transition {
    TransitionKind kind;
    ClusterId j;
    ClusterId k;
    double rate;
};

namespace detail {

// Shared by the engine and the reference enumeration so both produce the
// same floating-point value for the same state.
inline double move_rate(const EdgeRateTerm& term, const MobilityModel& model, double scale, std::int64_t count,
                        std::int64_t occ_j, std::int64_t occ_k, double n)
{
    if (count == 0)
        return 0.0;
    const double per_vehicle = evaluate_rate(term, model, double(occ_j) / n, double(occ_k) / n);
    return scale * per_vehicle * double(count);
}

inline double inform_rate(double beta, std::int64_t informed_j, std::int64_t non_informed_k, double n)
{
    return beta / n * double(informed_j) * double(non_informed_k);
}

inline void check_state(const SystemState& s, const ClusterGraph& g)
{
    if (s.size() != g.size() || s.non_informed.size() != g.size())
        throw ContractViolation("state size does not match the graph");
    if (!s.valid())
        throw ContractViolation("state has negative counts");
}

} // namespace detail

/// All transitions with positive rate, in the order MOVE_I edges, MOVE_S
/// edges, INFORM pairs, each lexicographic in (j, k).
inline std::vector<Transition> enumerate_transitions(const SystemState& s, const ClusterGraph& g,
                                                     const MobilityModel& model, const RoutingTable& routing)
{
    detail::check_state(s, g);
    const double n = double(s.total());
    std::vector<Transition> out;
    if (n <= 0.0)
        return out;
    const auto edges = g.edges();
    std::vector<EdgeRateTerm> terms;
    terms.reserve(edges.size());
    for (const auto& e : edges)
        terms.push_back(edge_rate_term(model, routing, g, e.from, e.to));

    const double si = model.class_scale(VehicleClass::informed);
    const double ss = model.class_scale(VehicleClass::non_informed);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [j, k] = edges[e];
        const double r = detail::move_rate(terms[e], model, si, s.informed[j], s.occupancy(j), s.occupancy(k), n);
        if (r > 0.0)
            out.push_back({TransitionKind::move_informed, j, k, r});
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [j, k] = edges[e];
        const double r =
            detail::move_rate(terms[e], model, ss, s.non_informed[j], s.occupancy(j), s.occupancy(k), n);
        if (r > 0.0)
            out.push_back({TransitionKind::move_non_informed, j, k, r});
    }
    for (const auto& link : g.comm_links()) {
        const double r = detail::inform_rate(link.beta, s.informed[link.from], s.non_informed[link.to], n);
        if (r > 0.0)
            out.push_back({TransitionKind::inform, link.from, link.to, r});
    }
    return out;
}

inline void apply_transition(SystemState& s, TransitionKind kind, ClusterId j, ClusterId k)
{
    switch (kind) {
    case TransitionKind::move_informed:
        --s.informed[j];
        ++s.informed[k];
        break;
    case TransitionKind::move_non_informed:
        --s.non_informed[j];
        ++s.non_informed[k];
        break;
    case TransitionKind::inform:
        --s.non_informed[k];
        ++s.informed[k];
        break;
    }
}

struct StepResult {
    SystemState next;
    double dt;
    Transition transition;
};

/// One Gillespie direct-method step by linear prefix search. Returns nullopt
/// when the total rate is zero (absorption).
inline std::optional<StepResult> gillespie_step(const SystemState& s, const ClusterGraph& g,
                                                const MobilityModel& model, const RoutingTable& routing, Rng& rng)
{
    const auto transitions = enumerate_transitions(s, g, model, routing);
    double total = 0.0;
    for (const auto& t : transitions)
        total += t.rate;
    if (!(total > 0.0))
        return std::nullopt;
    const double dt = rng.exponential(total);
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = transitions.size() - 1;
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        acc += transitions[i].rate;
        if (target < acc) {
            pick = i;
            break;
        }
    }
    StepResult r{s, dt, transitions[pick]};
    apply_transition(r.next, r.transition.kind, r.transition.j, r.transition.k);
    return r;
}

// ---------------------------------------------------------------------------

/// Complete binary tree of partial sums over a fixed set of leaves.
/// Parents are always recomputed from their children, so the root is a
/// deterministic function of the current leaf values.
class SumTree {
public:
    SumTree() = default;
    explicit SumTree(std::size_t leaves)
    {
        cap_ = 1;
        while (cap_ < leaves)
            cap_ <<= 1;
        leaves_ = leaves;
        tree_.assign(2 * cap_, 0.0);
    }

    std::size_t size() const noexcept { return leaves_; }
    double total() const noexcept { return tree_.size() > 1 ? tree_[1] : 0.0; }
    double leaf(std::size_t i) const { return tree_[cap_ + i]; }

    void set(std::size_t i, double v)
    {
        std::size_t p = cap_ + i;
        tree_[p] = v;
        for (p >>= 1; p > 0; p >>= 1)
            tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
    }

    /// Bulk assignment followed by one bottom-up pass.
    void assign(const std::vector<double>& values)
    {
        std::fill(tree_.begin(), tree_.end(), 0.0);
        std::copy(values.begin(), values.end(), tree_.begin() + std::ptrdiff_t(cap_));
        for (std::size_t p = cap_ - 1; p > 0; --p)
            tree_[p] = tree_[2 * p] + tree_[2 * p + 1];
    }

    /// Leaf i with prefix(i) <= target < prefix(i) + leaf(i). Never returns a
    /// zero leaf: rounding at the right edge falls back to the last
    /// positive leaf.
    std::size_t find(double target) const
    {
        std::size_t p = 1;
        while (p < cap_) {
            const double left = tree_[2 * p];
            if (target < left) {
                p = 2 * p;
            } else {
                target -= left;
                p = 2 * p + 1;
            }
        }
        std::size_t i = p - cap_;
        if (i >= leaves_ || tree_[p] <= 0.0) {
            i = std::min(i, leaves_ - 1);
            while (i > 0 && tree_[cap_ + i] <= 0.0)
                --i;
        }
        return i;
    }

private:
    std::size_t cap_ = 1;
    std::size_t leaves_ = 0;
    std::vector<double> tree_;
};

struct RunOptions {
    /// Recompute every leaf after each event instead of the touched ones.
    bool full_recompute = false;
    /// Called after every event with the new state and time.
    std::function<void(const SystemState&, double, const Transition&)> on_event;
    /// Safety valve against runaway loops; 0 = unlimited.
    std::uint64_t max_events = 0;
};

/// Event engine with one leaf per potential transition. After an event only
/// leaves whose rate can have changed are refreshed: outgoing edges of the
/// touched clusters, incoming edges as well when rates depend on occupancy,
/// and communication pairs with a touched endpoint.
class CtmcEngine {
public:
    CtmcEngine(const ClusterGraph& g, const MobilityModel& model, const RoutingTable& routing, SystemState init)
        : g_(g), model_(model), state_(std::move(init))
    {
        detail::check_state(state_, g);
        model.validate();
        n_ = double(state_.total());
        if (!(n_ > 0.0))
            throw ConfigError("initial state holds no vehicles");
        occupancy_dependent_ = model.state_dependent();
        scale_i_ = model.class_scale(VehicleClass::informed);
        scale_s_ = model.class_scale(VehicleClass::non_informed);

        const std::size_t J = g.size();
        out_begin_.assign(J + 1, 0);
        in_edges_.assign(J, {});
        for (ClusterId j = 0; j < J; ++j) {
            out_begin_[j] = from_.size();
            for (ClusterId k : g.out_neighbors(j)) {
                in_edges_[k].push_back(from_.size());
                from_.push_back(j);
                to_.push_back(k);
                terms_.push_back(edge_rate_term(model, routing, g, j, k));
            }
        }
        out_begin_[J] = from_.size();
        comm_begin_.assign(J + 1, 0);
        comm_in_.assign(J, {});
        for (ClusterId j = 0; j < J; ++j) {
            comm_begin_[j] = pair_from_.size();
            for (const auto& [k, b] : g.comm_row(j)) {
                comm_in_[k].push_back(pair_from_.size());
                pair_from_.push_back(j);
                pair_to_.push_back(k);
                beta_.push_back(b);
            }
        }
        comm_begin_[J] = pair_from_.size();
        edge_count_ = from_.size();
        tree_ = SumTree(2 * edge_count_ + pair_from_.size());
        recompute_all();
    }

    const SystemState& state() const noexcept { return state_; }
    double time() const noexcept { return t_; }
    double total_rate() const noexcept { return tree_.total(); }
    std::size_t leaf_count() const noexcept { return tree_.size(); }
    double leaf_rate(std::size_t i) const { return tree_.leaf(i); }

    /// Transition for a leaf index, with its current rate.
    Transition describe(std::size_t leaf) const
    {
        if (leaf < edge_count_)
            return {TransitionKind::move_informed, from_[leaf], to_[leaf], tree_.leaf(leaf)};
        if (leaf < 2 * edge_count_) {
            const std::size_t e = leaf - edge_count_;
            return {TransitionKind::move_non_informed, from_[e], to_[e], tree_.leaf(leaf)};
        }
        const std::size_t c = leaf - 2 * edge_count_;
        return {TransitionKind::inform, pair_from_[c], pair_to_[c], tree_.leaf(leaf)};
    }

    /// Positive-rate transitions in leaf order (matches enumerate_transitions).
    std::vector<Transition> transitions() const
    {
        std::vector<Transition> out;
        for (std::size_t i = 0; i < tree_.size(); ++i)
            if (tree_.leaf(i) > 0.0)
                out.push_back(describe(i));
        return out;
    }

    /// Advances by one event unless the next event would fall after
    /// `until`; in that case time is set to `until` and false is returned.
    /// Also returns false on absorption (time jumps to `until`).
    bool step(double until, Rng& rng, bool full_recompute = false, Transition* fired = nullptr)
    {
        const double total = tree_.total();
        if (!(total > 0.0)) {
            t_ = until;
            return false;
        }
        const double dt = rng.exponential(total);
        if (t_ + dt > until) {
            // memorylessness: the residual clock restarts at `until`
            t_ = until;
            return false;
        }
        const std::size_t leaf = tree_.find(rng.uniform() * total);
        const Transition tr = describe(leaf);
        apply_transition(state_, tr.kind, tr.j, tr.k);
        t_ += dt;
        if (full_recompute)
            recompute_all();
        else
            refresh(tr);
        if (fired)
            *fired = tr;
        return true;
    }

    void recompute_all()
    {
        std::vector<double> v(tree_.size(), 0.0);
        for (std::size_t e = 0; e < edge_count_; ++e) {
            v[e] = move_leaf(e, true);
            v[edge_count_ + e] = move_leaf(e, false);
        }
        for (std::size_t c = 0; c < pair_from_.size(); ++c)
            v[2 * edge_count_ + c] = inform_leaf(c);
        tree_.assign(v);
    }

private:
    double move_leaf(std::size_t e, bool informed) const
    {
        const ClusterId j = from_[e], k = to_[e];
        return detail::move_rate(terms_[e], model_, informed ? scale_i_ : scale_s_,
                                 informed ? state_.informed[j] : state_.non_informed[j], state_.occupancy(j),
                                 state_.occupancy(k), n_);
    }

    double inform_leaf(std::size_t c) const
    {
        return detail::inform_rate(beta_[c], state_.informed[pair_from_[c]], state_.non_informed[pair_to_[c]], n_);
    }

    void refresh_edge(std::size_t e)
    {
        tree_.set(e, move_leaf(e, true));
        tree_.set(edge_count_ + e, move_leaf(e, false));
    }

    void refresh_cluster(ClusterId c, bool occupancy_changed)
    {
        for (std::size_t e = out_begin_[c]; e < out_begin_[c + 1]; ++e)
            refresh_edge(e);
        if (occupancy_changed && occupancy_dependent_)
            for (std::size_t e : in_edges_[c])
                refresh_edge(e);
        for (std::size_t p = comm_begin_[c]; p < comm_begin_[c + 1]; ++p)
            tree_.set(2 * edge_count_ + p, inform_leaf(p));
        for (std::size_t p : comm_in_[c])
            tree_.set(2 * edge_count_ + p, inform_leaf(p));
    }

    void refresh(const Transition& tr)
    {
        if (tr.kind == TransitionKind::inform) {
            refresh_cluster(tr.k, false);
        } else {
            refresh_cluster(tr.j, true);
            refresh_cluster(tr.k, true);
        }
    }

    const ClusterGraph& g_;
    const MobilityModel& model_;
    SystemState state_;
    double n_ = 0.0;
    double t_ = 0.0;
    bool occupancy_dependent_ = false;
    double scale_i_ = 1.0, scale_s_ = 1.0;

    std::size_t edge_count_ = 0;
    std::vector<ClusterId> from_, to_;
    std::vector<EdgeRateTerm> terms_;
    std::vector<std::size_t> out_begin_;
    std::vector<std::vector<std::size_t>> in_edges_;

    std::vector<ClusterId> pair_from_, pair_to_;
    std::vector<double> beta_;
    std::vector<std::size_t> comm_begin_;
    std::vector<std::vector<std::size_t>> comm_in_;

    SumTree tree_;
};

/// One replication sampled at 0, sample_dt, ..., horizon. The state at a
/// sample instant includes every event up to and including that instant.
inline PropagationSeries run(const ClusterGraph& g, const MobilityModel& model, const RoutingTable& routing,
                             const SystemState& init, double horizon, double sample_dt, std::uint64_t seed,
                             const RunOptions& opt = {})
{
    const auto grid = sample_grid(horizon, sample_dt);
    CtmcEngine engine(g, model, routing, init);
    Rng rng(seed);
    PropagationSeries s;
    s.clusters = g.size();
    s.total = double(init.total());
    s.times.reserve(grid.size());
    s.rho.reserve(grid.size());
    s.informed.reserve(grid.size() * g.size());
    s.non_informed.reserve(grid.size() * g.size());

    std::uint64_t events = 0;
    Transition fired{};
    for (double ti : grid) {
        while (engine.step(ti, rng, opt.full_recompute, &fired)) {
            ++events;
            if (opt.on_event)
                opt.on_event(engine.state(), engine.time(), fired);
            if (opt.max_events && events >= opt.max_events)
                throw std::runtime_error("event limit reached at t=" + std::to_string(engine.time()));
        }
        s.push_sample(ti, engine.state());
    }
    return s;
}

struct EnsembleResult {
    /// Pointwise mean of per-cluster counts; rho is rho of the mean counts.
    PropagationSeries mean;
    /// Pointwise mean of the per-run rho curves.
    std::vector<double> mean_of_rho;
    /// max_t |mean_of_rho - mean.rho|
    double rho_discrepancy = 0.0;
    std::vector<std::vector<double>> run_rho;
    /// Filled only when keep_runs is requested.
    std::vector<PropagationSeries> runs;
};

struct EnsembleOptions {
    unsigned threads = 1;
    bool keep_runs = false;
    RunOptions run;
};

/// Replication i uses seed base_seed + i. Runs execute in batches; results
/// are added in index order, so the output does not depend on threads.
inline EnsembleResult run_ensemble(const ClusterGraph& g, const MobilityModel& model, const RoutingTable& routing,
                                   const SystemState& init, double horizon, double sample_dt, std::size_t runs,
                                   std::uint64_t base_seed, const EnsembleOptions& opt = {})
{
    if (runs < 1)
        throw ConfigError("runs must be at least 1");
    EnsembleResult out;
    std::vector<double> sum_i, sum_s, sum_rho;
    const std::size_t batch = std::max<std::size_t>(1, std::size_t(std::max(1u, opt.threads)) * 4);

    for (std::size_t first = 0; first < runs; first += batch) {
        const std::size_t count = std::min(batch, runs - first);
        std::vector<PropagationSeries> results(count);
        parallel_for(count, opt.threads, [&](std::size_t i) {
            results[i] = run(g, model, routing, init, horizon, sample_dt, base_seed + first + i, opt.run);
        });
        for (auto& r : results) {
            if (sum_i.empty()) {
                sum_i.assign(r.informed.size(), 0.0);
                sum_s.assign(r.non_informed.size(), 0.0);
                sum_rho.assign(r.rho.size(), 0.0);
                out.mean.times = r.times;
                out.mean.clusters = r.clusters;
                out.mean.total = r.total;
            }
            for (std::size_t i = 0; i < sum_i.size(); ++i) {
                sum_i[i] += r.informed[i];
                sum_s[i] += r.non_informed[i];
            }
            for (std::size_t i = 0; i < sum_rho.size(); ++i)
                sum_rho[i] += r.rho[i];
            out.run_rho.push_back(r.rho);
            if (opt.keep_runs)
                out.runs.push_back(std::move(r));
        }
    }

    const double inv = 1.0 / double(runs);
    PropagationSeries& m = out.mean;
    m.informed.resize(sum_i.size());
    m.non_informed.resize(sum_s.size());
    for (std::size_t i = 0; i < sum_i.size(); ++i) {
        m.informed[i] = sum_i[i] * inv;
        m.non_informed[i] = sum_s[i] * inv;
    }
    m.rho.resize(m.times.size());
    out.mean_of_rho.resize(m.times.size());
    for (std::size_t t = 0; t < m.times.size(); ++t) {
        double inf = 0.0;
        for (std::size_t j = 0; j < m.clusters; ++j)
            inf += m.I(t, j);
        m.rho[t] = inf / m.total;
        out.mean_of_rho[t] = sum_rho[t] * inv;
        out.rho_discrepancy = std::max(out.rho_discrepancy, std::abs(out.mean_of_rho[t] - m.rho[t]));
    }
    return out;
}

} // namespace infoprop
