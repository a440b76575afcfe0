// Command-line front end. Exit codes: 0 ok, 1 runtime failure, 2 config error.

#include "infoprop/scenario.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>
#include <sstream>

using namespace infoprop;

namespace {

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::size_t> runs;
    std::optional<double> horizon;
    std::optional<double> sample_dt;
    std::optional<double> tol;
    std::optional<double> fixed_dt;
};

void add_common(CLI::App* sub, Common& c, bool config_required = true)
{
    auto* opt = sub->add_option("--config", c.config, "scenario JSON");
    if (config_required)
        opt->required();
    sub->add_option("--out", c.out, "output directory (default: the config's output)");
    sub->add_option("--seed", c.seed, "base seed");
    sub->add_option("--threads", c.threads, "worker threads (0 = all cores)");
}

void add_run_flags(CLI::App* sub, Common& c)
{
    sub->add_option("--runs", c.runs, "CTMC or replay replications");
    sub->add_option("--horizon", c.horizon, "time horizon in seconds");
    sub->add_option("--sample-dt", c.sample_dt, "output interval in seconds");
    sub->add_option("--tol", c.tol, "integrator tolerance");
    sub->add_option("--fixed-dt", c.fixed_dt, "fixed RK4 step (0 = adaptive)");
}

ScenarioConfig load(const Common& c)
{
    ScenarioConfig cfg = load_scenario(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    if (c.runs) {
        cfg.runs = *c.runs;
        if (cfg.trajectory)
            cfg.trajectory->runs = *c.runs;
    }
    if (c.horizon) cfg.horizon = *c.horizon;
    if (c.sample_dt) cfg.sample_dt = *c.sample_dt;
    if (c.tol) cfg.tol = *c.tol;
    if (c.fixed_dt) cfg.fixed_dt = *c.fixed_dt;
    cfg.validate();
    return cfg;
}

std::string out_dir(const Common& c, const ScenarioConfig& cfg)
{
    if (!c.out.empty())
        return c.out;
    return cfg.resolve(cfg.output);
}

int run_with_engine(const Common& c, std::optional<Engine> engine)
{
    auto cfg = load(c);
    if (engine) {
        cfg.engine = *engine;
        cfg.case_study = CaseStudy::none;
        cfg.validate();
    }
    const auto dir = out_dir(c, cfg);
    const auto res = run_scenario(cfg, dir);
    std::cout << res.report << "artifacts in " << dir << '\n';
    return 0;
}

std::vector<double> parse_doubles(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ','))
        out.push_back(parse_double(cell));
    return out;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Information propagation on clustered road networks: CTMC, fluid ODE and trajectory replay"};
    app.require_subcommand(1);

    Common common;

    // build-graph
    auto* build = app.add_subcommand("build-graph", "write a cluster graph as JSON");
    int avenues = 6, streets = 6;
    std::string cbd = "2,2,3,3";
    double beta = 0.0;
    std::size_t chain = 0;
    add_common(build, common, false);
    build->add_option("--avenues", avenues, "grid avenues");
    build->add_option("--streets", streets, "grid streets");
    build->add_option("--cbd", cbd, "CBD rectangle x0,y0,x1,y1");
    build->add_option("--beta", beta, "same-segment beta");
    build->add_option("--chain", chain, "build a chain of this many clusters instead of a grid");

    auto* simulate = app.add_subcommand("simulate", "CTMC ensemble (engine=ctmc, or both with --both)");
    bool both = false;
    add_common(simulate, common);
    add_run_flags(simulate, common);
    simulate->add_flag("--both", both, "also integrate the ODE and report the max deviation");

    auto* integ = app.add_subcommand("integrate", "fluid ODE");
    add_common(integ, common);
    add_run_flags(integ, common);

    auto* replay = app.add_subcommand("replay", "trajectory replay against the open-system ODE");
    add_common(replay, common);
    add_run_flags(replay, common);

    auto* extract = app.add_subcommand("extract-rates", "cluster sequences -> rate table JSON");
    add_common(extract, common);

    auto* analyze = app.add_subcommand("analyze", "metrics of series CSV files");
    std::string series_path, against_path, graph_path;
    std::optional<double> export_at;
    double nominal_n = 0.0;
    analyze->add_option("--series", series_path, "series CSV")->required();
    analyze->add_option("--against", against_path, "second series CSV for the max deviation");
    analyze->add_option("--graph", graph_path, "graph JSON (reach and geographic export)");
    analyze->add_option("--export-at", export_at, "write per-segment CSV at this time");
    analyze->add_option("--nominal-n", nominal_n, "N for fractional series");
    analyze->add_option("--out", common.out, "output directory");

    auto* validate = app.add_subcommand("validate", "check a scenario and print its normalized form");
    add_common(validate, common);

    auto* bench = app.add_subcommand("benchmark", "ODE wall-clock time on chains of J clusters");
    std::string clusters = "10,1220";
    double bench_horizon = 200.0, bench_dt = 1.0;
    bench->add_option("--clusters", clusters, "comma-separated J values");
    bench->add_option("--horizon", bench_horizon, "time horizon");
    bench->add_option("--sample-dt", bench_dt, "output interval");
    bench->add_option("--out", common.out, "output directory");

    auto* cs = app.add_subcommand("case-study", "run a scenario as configured, case study included");
    add_common(cs, common);
    add_run_flags(cs, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*build) {
            ClusterGraph g(1);
            if (!common.config.empty()) {
                g = build_scenario_graph(load(common));
            } else if (chain > 0) {
                g = build_chain(chain, beta);
            } else {
                const auto r = parse_doubles(cbd);
                if (r.size() != 4)
                    throw ConfigError("--cbd needs x0,y0,x1,y1");
                GridOptions o;
                o.same_segment_beta = beta;
                g = build_grid(avenues, streets, {r[0], r[1], r[2], r[3]}, o);
            }
            const auto j = graph_to_json(g);
            if (common.out.empty()) {
                std::cout << j.dump(2) << '\n';
            } else {
                write_json_file(common.out, j);
                std::cout << "wrote " << common.out << " (" << g.size() << " clusters, " << g.edge_count()
                          << " mobility edges)\n";
            }
            return 0;
        }
        if (*simulate)
            return run_with_engine(common, both ? Engine::both : Engine::ctmc);
        if (*integ)
            return run_with_engine(common, Engine::ode);
        if (*replay) {
            auto cfg = load(common);
            if (!cfg.trajectory)
                throw ConfigError("replay needs a trajectory section");
            cfg.engine = Engine::replay;
            cfg.case_study = CaseStudy::trajectory;
            const auto dir = out_dir(common, cfg);
            std::cout << run_scenario(cfg, dir).report << "artifacts in " << dir << '\n';
            return 0;
        }
        if (*extract) {
            const auto cfg = load(common);
            if (!cfg.trajectory)
                throw ConfigError("extract-rates needs a trajectory section");
            const auto g = trajectory_graph(cfg);
            std::vector<std::string> warnings;
            const auto seqs = trajectory_sequences(cfg, g, warnings);
            const auto rt = extract_rates(seqs, g, cfg.trajectory->duration);
            for (const auto& w : warnings)
                std::cerr << "warning: " << w << '\n';
            const auto dir = out_dir(common, cfg);
            std::filesystem::create_directories(dir);
            const auto path = (std::filesystem::path(dir) / "rates.json").string();
            write_json_file(path, rate_table_to_json(rt));
            std::cout << "wrote " << path << " (" << seqs.size() << " vehicles, " << rt.undefined.size()
                      << " clusters without completed visits)\n";
            return 0;
        }
        if (*analyze) {
            const auto s = read_series_csv(series_path, nominal_n > 0.0);
            nlohmann::json m;
            m["samples"] = s.samples();
            m["final_rho"] = s.rho.back();
            if (!against_path.empty()) {
                const auto b = read_series_csv(against_path, nominal_n > 0.0);
                m["max_deviation"] = max_deviation(s, b);
            }
            if (!graph_path.empty()) {
                const auto g = graph_from_json(read_json_file(graph_path));
                if (g.size() != s.clusters)
                    throw ConfigError("graph and series differ in cluster count");
                m["final_reach"] = cluster_reach(s, g, 1.0, nominal_n).back();
                if (export_at) {
                    const auto recs = export_geographic(s, g, *export_at, 1.0, nominal_n);
                    std::ostream* os = &std::cout;
                    std::ofstream file;
                    if (!common.out.empty()) {
                        std::filesystem::create_directories(common.out);
                        file.open(std::filesystem::path(common.out) / "geographic.csv");
                        os = &file;
                    }
                    write_geographic_csv(*os, recs, g);
                }
            } else if (export_at) {
                throw ConfigError("--export-at needs --graph");
            }
            std::cout << m.dump(2) << '\n';
            return 0;
        }
        if (*validate) {
            const auto cfg = load(common);
            std::cout << scenario_to_json(cfg).dump(2) << '\n';
            return 0;
        }
        if (*bench) {
            std::vector<std::size_t> Js;
            for (double v : parse_doubles(clusters)) {
                if (!(v >= 2.0))
                    throw ConfigError("--clusters values must be >= 2");
                Js.push_back(std::size_t(v));
            }
            std::ostringstream table;
            table << "clusters,seconds,final_rho,steps\n";
            for (std::size_t J : Js) {
                const auto r = run_benchmark_one(J, bench_horizon, bench_dt);
                table << r.clusters << ',' << format_double(r.seconds) << ',' << format_double(r.final_rho) << ','
                      << r.steps << '\n';
                std::cout << "J=" << r.clusters << ": " << r.seconds << " s\n" << std::flush;
            }
            if (!common.out.empty()) {
                std::filesystem::create_directories(common.out);
                std::ofstream os(std::filesystem::path(common.out) / "benchmark.csv");
                os << table.str();
            }
            std::cout << table.str();
            return 0;
        }
        if (*cs)
            return run_with_engine(common, std::nullopt);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
