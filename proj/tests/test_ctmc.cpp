#include "support.hpp"

#include "catch_amalgamated.hpp"

using namespace infoprop;
using Catch::Approx;

namespace {

/// One cluster holding nI informed and nS non-informed vehicles, beta_11 = beta.
struct Single {
    ClusterGraph g;
    RoutingTable rt;
    SystemState s{1};
    Single(std::int64_t nI, std::int64_t nS, double beta) : g(1)
    {
        g.set_beta(0, 0, beta);
        rt = RoutingTable::uniform(g);
        s.informed[0] = nI;
        s.non_informed[0] = nS;
    }
};

double total_rate(const std::vector<Transition>& ts)
{
    double r = 0.0;
    for (const auto& t : ts)
        r += t.rate;
    return r;
}

} // namespace

TEST_CASE("transition enumeration examples")
{
    SECTION("single INFORM")
    {
        Single one(1, 1, 3.0);
        const auto ts = enumerate_transitions(one.s, one.g, MobilityModel::uniform(0.1), one.rt);
        REQUIRE(ts.size() == 1);
        CHECK(ts[0].kind == TransitionKind::inform);
        CHECK(ts[0].rate == 1.5);
    }
    SECTION("single MOVE_I")
    {
        ClusterGraph g(2);
        g.set_region(1, Region::virtual_exit);
        g.add_mobility_edge(0, 1);
        SystemState s(2);
        s.informed[0] = 5;
        const auto ts = enumerate_transitions(s, g, MobilityModel::uniform(0.1), RoutingTable::uniform(g));
        REQUIRE(ts.size() == 1);
        CHECK(ts[0].kind == TransitionKind::move_informed);
        CHECK(ts[0].rate == Approx(0.5).epsilon(1e-15));
    }
    SECTION("total move rate on the 6x6 grid")
    {
        auto G = testing::grid6(100);
        G.g.clear_comm();
        const auto ts = enumerate_transitions(G.init, G.g, MobilityModel::uniform(0.1), G.routing);
        CHECK(total_rate(ts) == Approx(1200.0).epsilon(1e-12));
        for (const auto& t : ts)
            CHECK(t.kind != TransitionKind::inform);
    }
    SECTION("ordering")
    {
        auto G = testing::grid6(10);
        const auto ts = enumerate_transitions(G.init, G.g, MobilityModel::uniform(0.1), G.routing);
        for (std::size_t i = 1; i < ts.size(); ++i) {
            const auto a = std::tuple{int(ts[i - 1].kind), ts[i - 1].j, ts[i - 1].k};
            const auto b = std::tuple{int(ts[i].kind), ts[i].j, ts[i].k};
            CHECK(a < b);
        }
    }
}

TEST_CASE("rates equal N f(k/N, h) against the brute-force reference")
{
    std::mt19937_64 rng(20240611);
    int checked = 0;
    for (int inst = 0; inst < 150; ++inst) {
        const auto in = oracle::random_instance(rng);
        const auto g = testing::to_graph(in);
        const auto model = testing::to_model(in);
        const auto rt = routing_probabilities(g, in.gamma);
        for (int rep = 0; rep < 5; ++rep) {
            const auto s = testing::random_counts(in, rng);
            const double N = double(s.total());
            std::vector<double> x(2 * std::size_t(in.J));
            for (int j = 0; j < in.J; ++j) {
                x[j] = double(s.informed[j]) / N;
                x[in.J + j] = double(s.non_informed[j]) / N;
            }
            auto expect = oracle::jump_rates(in, x);
            for (auto& [h, r] : expect)
                r *= N;
            const auto got = testing::library_jump_rates(enumerate_transitions(s, g, model, rt), in.J);
            CHECK(testing::rate_map_mismatch(expect, got) <= 1e-12);
            ++checked;
        }
    }
    CHECK(checked >= 100);
}

TEST_CASE("gillespie step")
{
    SECTION("absorption")
    {
        Single all(2, 0, 3.0);
        Rng rng(1);
        CHECK_FALSE(gillespie_step(all.s, all.g, MobilityModel::uniform(0.1), all.rt, rng).has_value());
    }
    SECTION("sojourn times are exponential")
    {
        Single one(1, 1, 3.0);
        Rng rng(42);
        std::vector<double> dts;
        double sum = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const auto r = gillespie_step(one.s, one.g, MobilityModel::uniform(0.1), one.rt, rng);
            REQUIRE(r.has_value());
            CHECK(r->next.informed[0] == 2);
            dts.push_back(r->dt);
            sum += r->dt;
        }
        CHECK(testing::ks_exponential(dts, 1.5) < testing::ks_critical_01(dts.size()));
        // mean 1/r within 3 standard errors (sd of the mean = 1 / (r sqrt(n)))
        CHECK(std::abs(sum / 1e4 - 1.0 / 1.5) < 3.0 / (1.5 * 100.0));
    }
    SECTION("selection frequencies follow the rates")
    {
        // two MOVE_S edges with p = 1/2 and one INFORM pair
        ClusterGraph g(3);
        g.set_region(1, Region::virtual_exit);
        g.set_region(2, Region::virtual_exit);
        g.add_mobility_edge(0, 1);
        g.add_mobility_edge(0, 2);
        g.set_beta(0, 0, 2.0);
        SystemState s(3);
        s.informed[0] = 1;
        s.non_informed[0] = 3;
        const auto m = MobilityModel::uniform(1.0);
        const auto rt = RoutingTable::uniform(g);
        // rates: MOVE_I 0.5 each, MOVE_S 1.5 each, INFORM 2/4*1*3 = 1.5; total 5.5
        Rng rng(9);
        int inform = 0;
        const int n = 20000;
        for (int i = 0; i < n; ++i)
            inform += gillespie_step(s, g, m, rt, rng)->transition.kind == TransitionKind::inform;
        const double p = 1.5 / 5.5;
        CHECK(std::abs(double(inform) / n - p) < 4.0 * std::sqrt(p * (1 - p) / n));
    }
}

TEST_CASE("trajectory invariants")
{
    auto G = testing::grid6(20, 3.0);
    const auto m = MobilityModel::density_dependent(0.1, 2.0, 5.0);
    for (auto model : {MobilityModel::uniform(0.1), m}) {
        std::int64_t prev_informed = G.init.total_informed();
        const std::int64_t N = G.init.total();
        std::size_t events = 0;
        RunOptions opt;
        opt.on_event = [&](const SystemState& s, double, const Transition&) {
            ++events;
            CHECK(s.total() == N);
            CHECK(s.valid());
            CHECK(s.total_informed() >= prev_informed);
            prev_informed = s.total_informed();
        };
        const auto series = run(G.g, model, G.routing, G.init, 30.0, 1.0, 5, opt);
        CHECK(events > 1000);
        for (std::size_t t = 1; t < series.samples(); ++t)
            CHECK(series.rho[t] >= series.rho[t - 1]);
    }
}

TEST_CASE("trivial runs")
{
    SECTION("no communication keeps rho constant")
    {
        auto G = testing::grid6(20);
        G.g.clear_comm();
        const auto s = run(G.g, MobilityModel::uniform(0.1), G.routing, G.init, 50.0, 1.0, 3);
        for (double r : s.rho)
            CHECK(r == s.rho.front());
        CHECK(s.rho.front() == Approx(2.0 / 2400.0));
    }
    SECTION("all informed")
    {
        auto G = testing::grid6(20);
        for (ClusterId j = 0; j < G.g.size(); ++j) {
            G.init.informed[j] += G.init.non_informed[j];
            G.init.non_informed[j] = 0;
        }
        const auto s = run(G.g, MobilityModel::uniform(0.1), G.routing, G.init, 20.0, 1.0, 3);
        for (double r : s.rho)
            CHECK(r == 1.0);
    }
    SECTION("absorbing state jumps to the horizon")
    {
        Single all(2, 0, 3.0);
        const auto s = run(all.g, MobilityModel::uniform(0.1), all.rt, all.s, 5.0, 0.5, 1);
        CHECK(s.samples() == 11);
        CHECK(s.times.back() == 5.0);
    }
    SECTION("empty initial state is rejected")
    {
        Single none(0, 0, 1.0);
        CHECK_THROWS_AS(run(none.g, MobilityModel::uniform(0.1), none.rt, none.s, 1.0, 1.0, 1), ConfigError);
    }
}

TEST_CASE("seeded runs are reproducible")
{
    auto G = testing::grid6(30, 3.0);
    const auto m = MobilityModel::uniform(0.1);
    const auto a = run(G.g, m, G.routing, G.init, 40.0, 1.0, 77);
    const auto b = run(G.g, m, G.routing, G.init, 40.0, 1.0, 77);
    const auto c = run(G.g, m, G.routing, G.init, 40.0, 1.0, 78);
    CHECK(a.informed == b.informed);
    CHECK(a.non_informed == b.non_informed);
    CHECK(a.rho == b.rho);
    CHECK(a.informed != c.informed);
}

TEST_CASE("incremental updates match full recomputation")
{
    for (int law = 0; law < 2; ++law) {
        auto G = testing::grid6(15, 3.0);
        const auto m = law == 0 ? MobilityModel::two_level(0.05, 0.1) : MobilityModel::density_dependent(0.1, 1.0, 10.0);
        RunOptions full;
        full.full_recompute = true;
        const auto a = run(G.g, m, G.routing, G.init, 40.0, 1.0, 5);
        const auto b = run(G.g, m, G.routing, G.init, 40.0, 1.0, 5, full);
        CHECK(a.informed == b.informed);
        CHECK(a.non_informed == b.non_informed);
    }
}

TEST_CASE("engine leaves agree with the enumeration after many events")
{
    auto G = testing::grid6(15, 3.0);
    for (auto m : {MobilityModel::uniform(0.1), MobilityModel::density_dependent(0.1, 2.0, 4.0)}) {
        CtmcEngine e(G.g, m, G.routing, G.init);
        Rng rng(3);
        for (int i = 0; i < 2000 && e.step(1e9, rng); ++i) {
        }
        const auto expect = testing::library_jump_rates(enumerate_transitions(e.state(), G.g, m, G.routing),
                                                        int(G.g.size()));
        const auto got = testing::library_jump_rates(e.transitions(), int(G.g.size()));
        CHECK(testing::rate_map_mismatch(expect, got) <= 1e-12);
        CHECK(e.total_rate() == Approx(total_rate(enumerate_transitions(e.state(), G.g, m, G.routing))).epsilon(1e-10));
    }
}

TEST_CASE("sum tree")
{
    SumTree t(5);
    t.assign({1.0, 0.0, 2.0, 0.0, 3.0});
    CHECK(t.total() == 6.0);
    CHECK(t.find(0.5) == 0);
    CHECK(t.find(1.0) == 2);
    CHECK(t.find(2.999) == 2);
    CHECK(t.find(3.0) == 4);
    CHECK(t.find(5.999) == 4);
    t.set(4, 0.0);
    CHECK(t.total() == 3.0);
    CHECK(t.find(2.9999) == 2);
}

TEST_CASE("ensembles")
{
    auto G = testing::grid6(20, 3.0);
    const auto m = MobilityModel::uniform(0.1);
    SECTION("one run equals a single run")
    {
        const auto e = run_ensemble(G.g, m, G.routing, G.init, 30.0, 1.0, 1, 11);
        const auto s = run(G.g, m, G.routing, G.init, 30.0, 1.0, 11);
        CHECK(e.mean.informed == s.informed);
        CHECK(e.mean.rho == s.rho);
    }
    SECTION("independent of the thread count")
    {
        EnsembleOptions one, four;
        four.threads = 4;
        const auto a = run_ensemble(G.g, m, G.routing, G.init, 30.0, 1.0, 9, 100, one);
        const auto b = run_ensemble(G.g, m, G.routing, G.init, 30.0, 1.0, 9, 100, four);
        CHECK(a.mean.informed == b.mean.informed);
        CHECK(a.mean.non_informed == b.mean.non_informed);
        CHECK(a.mean.rho == b.mean.rho);
        CHECK(a.run_rho == b.run_rho);
    }
    SECTION("mean of rho equals rho of the mean in a closed system")
    {
        const auto e = run_ensemble(G.g, m, G.routing, G.init, 30.0, 1.0, 12, 1);
        CHECK(e.rho_discrepancy <= 1e-12);
        REQUIRE(e.run_rho.size() == 12);
        for (std::size_t t = 0; t < e.mean.samples(); ++t) {
            double mean = 0.0;
            for (const auto& r : e.run_rho)
                mean += r[t];
            CHECK(mean / 12.0 == Approx(e.mean.rho[t]).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(run_ensemble(G.g, m, G.routing, G.init, 30.0, 1.0, 0, 1), ConfigError);
}
