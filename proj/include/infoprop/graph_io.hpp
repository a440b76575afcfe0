#pragma once

// ClusterGraph <-> JSON:
//   {"centers":[[x,y],...], "region":["cbd",...], "segments":[s,...],
//    "mobility":[[j,k],...], "comm":[[j,k,beta],...]}

#include "infoprop/error.hpp"
#include "infoprop/topology.hpp"

#include "json.hpp"

#include <fstream>
#include <string>

namespace infoprop {

inline nlohmann::json graph_to_json(const ClusterGraph& g)
{
    nlohmann::json j;
    auto centers = nlohmann::json::array();
    auto region = nlohmann::json::array();
    auto segments = nlohmann::json::array();
    for (ClusterId c = 0; c < g.size(); ++c) {
        centers.push_back({g.center(c).x, g.center(c).y});
        region.push_back(std::string(to_string(g.region(c))));
        segments.push_back(g.segment(c));
    }
    auto mobility = nlohmann::json::array();
    for (const auto& e : g.edges())
        mobility.push_back({e.from, e.to});
    auto comm = nlohmann::json::array();
    for (const auto& l : g.comm_links())
        comm.push_back({l.from, l.to, l.beta});
    j["centers"] = centers;
    j["region"] = region;
    j["segments"] = segments;
    j["mobility"] = mobility;
    j["comm"] = comm;
    return j;
}

inline ClusterGraph graph_from_json(const nlohmann::json& j)
{
    try {
        const auto& centers = j.at("centers");
        const std::size_t J = centers.size();
        if (J == 0)
            throw ConfigError("graph has no clusters");
        ClusterGraph g(J);
        for (ClusterId c = 0; c < J; ++c)
            g.set_center(c, {centers[c].at(0).get<double>(), centers[c].at(1).get<double>()});
        if (j.contains("region")) {
            if (j["region"].size() != J)
                throw ConfigError("region array length differs from centers");
            for (ClusterId c = 0; c < J; ++c)
                g.set_region(c, region_from_string(j["region"][c].get<std::string>()));
        }
        if (j.contains("segments")) {
            if (j["segments"].size() != J)
                throw ConfigError("segments array length differs from centers");
            for (ClusterId c = 0; c < J; ++c)
                g.set_segment(c, j["segments"][c].get<std::size_t>());
        }
        for (const auto& e : j.value("mobility", nlohmann::json::array())) {
            const auto a = e.at(0).get<ClusterId>(), b = e.at(1).get<ClusterId>();
            if (a >= J || b >= J)
                throw ConfigError("mobility edge references an unknown cluster");
            g.add_mobility_edge(a, b);
        }
        for (const auto& e : j.value("comm", nlohmann::json::array())) {
            const auto a = e.at(0).get<ClusterId>(), b = e.at(1).get<ClusterId>();
            if (a >= J || b >= J)
                throw ConfigError("communication link references an unknown cluster");
            g.set_beta(a, b, e.at(2).get<double>());
        }
        g.validate();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed graph JSON: ") + e.what());
    }
}

inline nlohmann::json read_json_file(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigError("cannot read " + path);
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j)
{
    std::ofstream os(path);
    if (!os)
        throw DataError("cannot write " + path);
    os << j.dump(2) << '\n';
}

} // namespace infoprop
