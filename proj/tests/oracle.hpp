#pragma once

// Brute-force reference for the jump-rate function f(x, h): every jump
// vector h is enumerated explicitly from first principles (own routing,
// own rate laws) and rates with equal h are summed. Shares nothing with
// the library beyond the plain data it is handed.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

namespace oracle {

enum class Law { uniform, two_level, density };

struct Instance {
    int J = 0;
    std::vector<std::vector<bool>> adj;
    std::vector<double> cx, cy;
    std::vector<bool> cbd;
    std::vector<std::vector<double>> beta;
    double gamma = 1.0;
    Law law = Law::uniform;
    double lambda = 0.1, lambda_d = 0.05, lambda_o = 0.1, a = 1.0, b = 1.0;
};

inline double dist_to_cbd(const Instance& in, int x)
{
    double best = INFINITY;
    for (int y = 0; y < in.J; ++y)
        if (in.cbd[y]) {
            const double dx = in.cx[x] - in.cx[y], dy = in.cy[x] - in.cy[y];
            best = std::min(best, std::sqrt(dx * dx + dy * dy));
        }
    return best;
}

inline double routing_p(const Instance& in, int j, int k)
{
    if (!in.adj[j][k])
        return 0.0;
    auto toward = [&](int from, int to) {
        const double dj = dist_to_cbd(in, from), dk = dist_to_cbd(in, to);
        if (dj != dk)
            return dj > dk;
        return bool(in.cbd[from] && in.cbd[to]);
    };
    int nd = 0, no = 0;
    for (int m = 0; m < in.J; ++m)
        if (in.adj[j][m])
            (toward(j, m) ? nd : no)++;
    const double po = 1.0 / (nd * in.gamma + no);
    return toward(j, k) ? in.gamma * po : po;
}

/// Per-vehicle rate j -> k at fractional state x = (I_1..I_J, S_1..S_J).
inline double per_vehicle(const Instance& in, const std::vector<double>& x, int j, int k)
{
    const double p = routing_p(in, j, k);
    switch (in.law) {
    case Law::uniform:
        return p * in.lambda;
    case Law::two_level:
        return p * (in.cbd[j] ? in.lambda_d : in.lambda_o);
    case Law::density: {
        const double s = x[j] + x[in.J + j] + x[k] + x[in.J + k];
        const double br = 1.0 - std::pow(s, in.a);
        return in.lambda * p * (br > 0.0 ? std::pow(br, in.b) : 0.0);
    }
    }
    return 0.0;
}

using Jump = std::vector<int>;

/// f(x, h) for every h with a non-zero contribution.
inline std::map<Jump, double> jump_rates(const Instance& in, const std::vector<double>& x)
{
    const int J = in.J;
    std::map<Jump, double> f;
    for (int j = 0; j < J; ++j)
        for (int k = 0; k < J; ++k) {
            if (j == k || !in.adj[j][k])
                continue;
            const double lam = per_vehicle(in, x, j, k);
            Jump hi(2 * J, 0), hs(2 * J, 0);
            hi[j] = -1;
            hi[k] = 1;
            hs[J + j] = -1;
            hs[J + k] = 1;
            f[hi] += lam * x[j];
            f[hs] += lam * x[J + j];
        }
    for (int j = 0; j < J; ++j)
        for (int k = 0; k < J; ++k) {
            if (in.beta[j][k] <= 0.0)
                continue;
            Jump h(2 * J, 0);
            h[k] = 1;
            h[J + k] = -1;
            f[h] += in.beta[j][k] * x[j] * x[J + k];
        }
    return f;
}

inline std::vector<double> drift(const Instance& in, const std::vector<double>& x)
{
    std::vector<double> d(2 * in.J, 0.0);
    for (const auto& [h, rate] : jump_rates(in, x))
        for (int i = 0; i < 2 * in.J; ++i)
            d[i] += h[i] * rate;
    return d;
}

/// Random instance with J in [2, 6]; every cluster gets an outgoing edge
/// and at least one cluster is CBD.
inline Instance random_instance(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> U(0.0, 1.0);
    Instance in;
    in.J = 2 + int(rng() % 5);
    const int J = in.J;
    in.adj.assign(J, std::vector<bool>(J, false));
    in.beta.assign(J, std::vector<double>(J, 0.0));
    for (int j = 0; j < J; ++j) {
        // distinct centers: a non-CBD cluster sitting on a CBD center would
        // be at distance 0 without being in D
        double x, y;
        bool clash;
        do {
            x = std::round(U(rng) * 8.0) / 2.0;
            y = std::round(U(rng) * 8.0) / 2.0;
            clash = false;
            for (int i = 0; i < j; ++i)
                clash = clash || (in.cx[i] == x && in.cy[i] == y);
        } while (clash);
        in.cx.push_back(x);
        in.cy.push_back(y);
        in.cbd.push_back(U(rng) < 0.3);
        for (int k = 0; k < J; ++k) {
            if (k != j && U(rng) < 0.5)
                in.adj[j][k] = true;
            if (U(rng) < 0.4)
                in.beta[j][k] = 5.0 * U(rng);
        }
        if (std::none_of(in.adj[j].begin(), in.adj[j].end(), [](bool v) { return v; }))
            in.adj[j][(j + 1) % J] = true;
    }
    if (std::none_of(in.cbd.begin(), in.cbd.end(), [](bool v) { return v; }))
        in.cbd[rng() % J] = true;
    in.gamma = 0.2 + 5.0 * U(rng);
    const int law = int(rng() % 3);
    in.law = law == 0 ? Law::uniform : law == 1 ? Law::two_level : Law::density;
    in.lambda = 0.05 + U(rng);
    in.lambda_d = 0.05 + U(rng);
    in.lambda_o = 0.05 + U(rng);
    in.a = 1.0 + 4.0 * U(rng);
    in.b = 1.0 + 10.0 * U(rng);
    return in;
}

/// Uniform point of the simplex over the 2J coordinates.
inline std::vector<double> random_point(const Instance& in, std::mt19937_64& rng)
{
    std::exponential_distribution<double> E(1.0);
    std::vector<double> x(2 * in.J);
    double s = 0.0;
    for (auto& v : x)
        s += (v = E(rng));
    for (auto& v : x)
        v /= s;
    return x;
}

} // namespace oracle
