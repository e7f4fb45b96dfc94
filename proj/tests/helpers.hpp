// Shared oracles and generators for the test suite. Everything here is
// deliberately independent of the library's own algorithms: brute-force
// enumeration, direct-summation formulas, and central finite differences.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graft/rng.hpp"

namespace testutil {

inline std::vector<double> rand_vec(graft::RngStream& rng, std::size_t m, double lo, double hi) {
    std::vector<double> v(m);
    for (double& x : v) x = lo + (hi - lo) * rng.uniform();
    return v;
}

// O(n^2) concordance oracle: pair (i,j) comparable iff t_i < t_j and
// delta_i = 1; concordant when s_i < s_j; tied scores count one half.
inline double c_index_bruteforce(std::span<const double> s, std::span<const double> t,
                                 std::span<const std::uint8_t> d) {
    double conc = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (i == j) continue;
            if (!(t[i] < t[j] && d[i])) continue;
            comp += 1.0;
            if (s[i] < s[j]) conc += 1.0;
            else if (s[i] == s[j]) conc += 0.5;
        }
    return conc / comp;
}

// Exhaustive projection onto the non-increasing cone: enumerate every
// contiguous block partition (2^(m-1)), keep the feasible ones, and return
// the block-mean fit with the smallest squared error.
inline std::vector<double> isotonic_bruteforce(std::span<const double> y) {
    const std::size_t m = y.size();
    std::vector<double> best;
    double best_sse = std::numeric_limits<double>::infinity();
    const std::size_t cuts = std::size_t{1} << (m - 1);
    for (std::size_t mask = 0; mask < cuts; ++mask) {
        std::vector<double> fit(m);
        double sse = 0.0;
        bool feasible = true;
        double prev = std::numeric_limits<double>::infinity();
        std::size_t start = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const bool boundary = (i == m - 1) || ((mask >> i) & 1u);
            if (!boundary) continue;
            double sum = 0.0;
            for (std::size_t k = start; k <= i; ++k) sum += y[k];
            const double mean = sum / static_cast<double>(i - start + 1);
            if (mean > prev + 1e-12) {  // blocks must be non-increasing
                feasible = false;
                break;
            }
            prev = mean;
            for (std::size_t k = start; k <= i; ++k) {
                fit[k] = mean;
                sse += (y[k] - mean) * (y[k] - mean);
            }
            start = i + 1;
        }
        if (feasible && sse < best_sse) {
            best_sse = sse;
            best = std::move(fit);
        }
    }
    return best;
}

// Central finite difference of a scalar function along one coordinate.
inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::size_t j, double h) {
    const double x0 = x[j];
    x[j] = x0 + h;
    const double up = f(x);
    x[j] = x0 - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::fabs(got), std::fabs(want), 1e-10});
    return std::fabs(got - want) / denom;
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

}  // namespace testutil
