#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graft/errors.hpp"
#include "graft/km.hpp"

namespace graft {

namespace detail {

// Fenwick tree over compressed score ranks; counts pairs in O(n log n).
class Fenwick {
  public:
    explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
    void add(std::size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // count of inserted values with rank < i
    long long below(std::size_t i) const {
        long long s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

  private:
    std::vector<long long> tree_;
};

}  // namespace detail

// Harrell's concordance index, oriented so that a higher score predicts
// longer survival. A pair (i, j) with t_i < t_j is comparable iff subject i
// had the event; it is concordant when s_i < s_j; tied scores count half.
inline double c_index(std::span<const double> scores, std::span<const double> times,
                      std::span<const std::uint8_t> events) {
    const std::size_t n = scores.size();
    if (times.size() != n || events.size() != n)
        throw ValidationError("c_index: input lengths differ");

    std::vector<double> sorted_scores(scores.begin(), scores.end());
    std::sort(sorted_scores.begin(), sorted_scores.end());
    sorted_scores.erase(std::unique(sorted_scores.begin(), sorted_scores.end()),
                        sorted_scores.end());
    const auto rank_of = [&](double s) {
        return static_cast<std::size_t>(
            std::lower_bound(sorted_scores.begin(), sorted_scores.end(), s) -
            sorted_scores.begin());
    };

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    // Sweep times ascending; the tree holds event subjects with strictly
    // smaller time than the current group.
    detail::Fenwick tree(sorted_scores.size());
    long long comparable = 0, concordant = 0;
    double half_ties = 0.0;
    long long events_inserted = 0;
    std::size_t a = 0;
    while (a < n) {
        std::size_t b = a;
        while (b < n && times[order[b]] == times[order[a]]) ++b;
        for (std::size_t k = a; k < b; ++k) {
            const std::size_t j = order[k];
            const std::size_t r = rank_of(scores[j]);
            const long long lower = tree.below(r);          // s_i < s_j
            const long long leq = tree.below(r + 1);        // s_i <= s_j
            comparable += events_inserted;
            concordant += lower;
            half_ties += 0.5 * static_cast<double>(leq - lower);
        }
        for (std::size_t k = a; k < b; ++k) {
            const std::size_t j = order[k];
            if (events[j]) {
                tree.add(rank_of(scores[j]));
                ++events_inserted;
            }
        }
        a = b;
    }
    if (comparable == 0) throw ValidationError("c_index: no comparable pairs");
    return (static_cast<double>(concordant) + half_ties) / static_cast<double>(comparable);
}

// KM estimate of the censoring distribution G(t): flip the event flags.
inline KMCurve fit_censoring_km(std::span<const double> times,
                                std::span<const std::uint8_t> events) {
    std::vector<std::uint8_t> flipped(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) flipped[i] = events[i] ? 0 : 1;
    return fit_km(times, flipped);
}

struct EvalGrid {
    std::vector<double> times;  // ascending
    std::string truncation = "none";
};

// 100 equally spaced points from min to max observed test time, truncated at
// the largest t where the censoring survival G is still positive.
inline EvalGrid make_ibs_grid(std::span<const double> test_times, const KMCurve& censor_km,
                              std::size_t n_points = 100) {
    if (test_times.empty()) throw ValidationError("make_ibs_grid: no test times");
    const auto [lo_it, hi_it] = std::minmax_element(test_times.begin(), test_times.end());
    const double lo = *lo_it, hi = *hi_it;
    EvalGrid grid;
    for (std::size_t k = 0; k < n_points; ++k) {
        const double t = n_points == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) /
                                                  static_cast<double>(n_points - 1);
        if (survival_at(censor_km, t) > 0.0) {
            grid.times.push_back(t);
        } else {
            grid.truncation = "censoring_support";
        }
    }
    if (grid.times.empty())
        throw NumericError("make_ibs_grid: censoring survival is zero on the whole grid");
    return grid;
}

// IPCW Brier score at one time point (Graf et al. weighting).
inline double brier_at(const std::function<double(std::size_t, double)>& curve_fn, double t,
                       std::span<const double> times, std::span<const std::uint8_t> events,
                       const KMCurve& censor_km) {
    const std::size_t n = times.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s_hat = curve_fn(i, t);
        if (times[i] <= t && events[i]) {
            const double g = survival_before(censor_km, times[i]);
            if (g <= 0.0) throw NumericError("brier_at: zero censoring weight at an event");
            acc += s_hat * s_hat / g;
        } else if (times[i] > t) {
            const double g = survival_at(censor_km, t);
            if (g <= 0.0) throw NumericError("brier_at: zero censoring weight on the grid");
            acc += (1.0 - s_hat) * (1.0 - s_hat) / g;
        }
    }
    return acc / static_cast<double>(n);
}

// Integrated Brier score: trapezoidal average of BS(t) over the grid,
// normalized by the grid span.
inline double ibs(const std::function<double(std::size_t, double)>& curve_fn,
                  std::span<const double> times, std::span<const std::uint8_t> events,
                  const EvalGrid& grid, const KMCurve& censor_km) {
    if (grid.times.empty()) throw ValidationError("ibs: empty grid");
    std::vector<double> bs(grid.times.size());
    for (std::size_t k = 0; k < grid.times.size(); ++k)
        bs[k] = brier_at(curve_fn, grid.times[k], times, events, censor_km);
    if (grid.times.size() == 1) return bs[0];
    double integral = 0.0;
    for (std::size_t k = 0; k + 1 < grid.times.size(); ++k)
        integral += 0.5 * (bs[k] + bs[k + 1]) * (grid.times[k + 1] - grid.times[k]);
    return integral / (grid.times.back() - grid.times.front());
}

}  // namespace graft
