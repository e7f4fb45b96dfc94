#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "graft/errors.hpp"
#include "graft/soft_rank.hpp"

namespace graft {

// Cumulative baseline hazard as (event-time knot, value) pairs; evaluation
// is 0 before the first knot, linear between knots, constant after the last.
struct BreslowBaseline {
    std::vector<double> knot_times;   // distinct event times, ascending
    std::vector<double> knot_values;  // non-decreasing cumulative hazard

    double at(double t) const {
        if (knot_times.empty() || t < knot_times.front()) return 0.0;
        if (t >= knot_times.back()) return knot_values.back();
        const auto it = std::upper_bound(knot_times.begin(), knot_times.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - knot_times.begin()) - 1;
        const double span = knot_times[j + 1] - knot_times[j];
        const double alpha = (t - knot_times[j]) / span;
        return knot_values[j] + alpha * (knot_values[j + 1] - knot_values[j]);
    }
};

struct CoxFit {
    double beta = 0.0;
    bool diverged = false;
    int iterations = 0;
};

namespace detail {

// Risk-set sweep shared by the Newton iteration and the Breslow estimator.
// Calls visit(t_j, event_score_sum, d_j, sw, sws, swss, m_stab) at every
// distinct event time, descending; the sums run over exp(beta*s - m_stab)
// on the risk set {k : t_k >= t_j}.
template <typename Visit>
void cox_risk_sweep(std::span<const double> scores, std::span<const double> times,
                    std::span<const std::uint8_t> events, double beta, Visit&& visit) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

    double m_stab = 0.0;
    for (std::size_t i = 0; i < n; ++i) m_stab = std::max(m_stab, beta * scores[i]);

    double sw = 0.0, sws = 0.0, swss = 0.0;
    std::size_t a = 0;
    while (a < n) {
        std::size_t b = a;
        double event_score_sum = 0.0;
        std::size_t d = 0;
        while (b < n && times[order[b]] == times[order[a]]) {
            const std::size_t i = order[b];
            const double w = std::exp(beta * scores[i] - m_stab);
            sw += w;
            sws += w * scores[i];
            swss += w * scores[i] * scores[i];
            if (events[i]) {
                ++d;
                event_score_sum += scores[i];
            }
            ++b;
        }
        if (d > 0) visit(times[order[a]], event_score_sum, d, sw, sws, swss, m_stab);
        a = b;
    }
}

}  // namespace detail

// Newton-Raphson on the 1-D Cox partial log-likelihood with Breslow tie
// handling. Monotone likelihoods (separated data) have no finite maximizer;
// the estimate is clamped to [-50, 50] and flagged.
inline CoxFit fit_cox_1d(std::span<const double> scores, std::span<const double> times,
                         std::span<const std::uint8_t> events) {
    const std::size_t n = scores.size();
    if (times.size() != n || events.size() != n)
        throw ValidationError("fit_cox_1d: input lengths differ");
    if (std::find(events.begin(), events.end(), std::uint8_t{1}) == events.end())
        throw ValidationError("fit_cox_1d: no events");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError("fit_cox_1d: non-finite score");

    constexpr double kBound = 50.0, kTol = 1e-8;
    CoxFit fit;
    bool converged = false;
    for (int iter = 0; iter < 100; ++iter) {
        double u = 0.0, info = 0.0;
        detail::cox_risk_sweep(scores, times, events, fit.beta,
                               [&](double, double ess, std::size_t d, double sw, double sws,
                                   double swss, double) {
                                   const double mean = sws / sw;
                                   u += ess - static_cast<double>(d) * mean;
                                   info += static_cast<double>(d) * (swss / sw - mean * mean);
                               });
        fit.iterations = iter + 1;
        if (!(info > 1e-12)) {
            // No curvature before we ever stepped means a constant likelihood
            // (all scores tied): beta = 0 is a maximizer. Losing curvature
            // after marching means the flat tail of a monotone likelihood --
            // there |u| also decays to zero, so a score-only test would
            // misread separation as convergence.
            converged = iter == 0 && std::abs(u) < kTol;
            break;
        }
        const double step = u / info;
        fit.beta = std::clamp(fit.beta + step, -kBound, kBound);
        if (std::abs(step) < kTol) {
            converged = true;
            break;
        }
    }
    fit.diverged = !converged || std::abs(fit.beta) >= kBound;
    return fit;
}

// Breslow cumulative baseline hazard at the fitted coefficient:
// L0(t) = sum over event times t_j <= t of d_j / sum_{risk set} exp(beta*s).
inline BreslowBaseline breslow_baseline(std::span<const double> scores,
                                        std::span<const double> times,
                                        std::span<const std::uint8_t> events, double beta) {
    BreslowBaseline base;
    detail::cox_risk_sweep(scores, times, events, beta,
                           [&](double t, double, std::size_t d, double sw, double, double,
                               double m_stab) {
                               base.knot_times.push_back(t);
                               base.knot_values.push_back(static_cast<double>(d) *
                                                          std::exp(-m_stab) / sw);
                           });
    // the sweep visits event times descending; flip and accumulate
    std::reverse(base.knot_times.begin(), base.knot_times.end());
    std::reverse(base.knot_values.begin(), base.knot_values.end());
    double cum = 0.0;
    for (double& v : base.knot_values) {
        cum += v;
        v = cum;
        if (!std::isfinite(v)) throw NumericError("breslow_baseline: non-finite hazard");
    }
    return base;
}

struct CoxCalibrator {
    CoxFit fit;
    BreslowBaseline baseline;

    // S(t|s) = exp(-L0(t) * exp(beta*s)); the proportional-hazards survival
    // function implied by the hazard model.
    double survival(double score, double t) const {
        const double l0 = baseline.at(t);
        if (l0 <= 0.0) return 1.0;
        return std::exp(-l0 * std::exp(fit.beta * score));
    }
};

inline CoxCalibrator fit_cox_calibrator(std::span<const double> scores,
                                        std::span<const double> times,
                                        std::span<const std::uint8_t> events) {
    CoxCalibrator cal;
    cal.fit = fit_cox_1d(scores, times, events);
    cal.baseline = breslow_baseline(scores, times, events, cal.fit.beta);
    return cal;
}

// Monotone non-decreasing score -> survival-probability map at one time
// point, stored as breakpoints with linear interpolation between them.
struct IsotonicMap {
    std::vector<double> knot_scores;
    std::vector<double> knot_values;
    bool degenerate = false;

    double at(double score) const {
        if (knot_scores.empty()) return 1.0;
        if (score <= knot_scores.front()) return knot_values.front();
        if (score >= knot_scores.back()) return knot_values.back();
        const auto it = std::upper_bound(knot_scores.begin(), knot_scores.end(), score);
        const std::size_t j = static_cast<std::size_t>(it - knot_scores.begin()) - 1;
        const double span = knot_scores[j + 1] - knot_scores[j];
        const double alpha = (score - knot_scores[j]) / span;
        return knot_values[j] + alpha * (knot_values[j + 1] - knot_values[j]);
    }
};

struct IsotonicCalibrator {
    std::vector<double> grid;  // K ascending time points
    std::vector<IsotonicMap> maps;

    double survival(double score, double t) const {
        if (grid.empty()) throw NumericError("isotonic survival: empty calibrator");
        if (t <= grid.front()) return maps.front().at(score);
        if (t >= grid.back()) return maps.back().at(score);
        const auto it = std::upper_bound(grid.begin(), grid.end(), t);
        const std::size_t j = static_cast<std::size_t>(it - grid.begin()) - 1;
        const double alpha = (t - grid[j]) / (grid[j + 1] - grid[j]);
        return (1.0 - alpha) * maps[j].at(score) + alpha * maps[j + 1].at(score);
    }
};

// Per-time-point isotonic calibration: at each of K grid times, binary
// survival targets (alive -> 1, observed dead -> 0, censored-before
// excluded) are pooled by a weighted PAV into a non-decreasing map from
// score to survival probability. Grid points with fewer than two usable
// subjects inherit their nearest earlier fitted map.
inline IsotonicCalibrator fit_isotonic(std::span<const double> scores,
                                       std::span<const double> times,
                                       std::span<const std::uint8_t> events, std::size_t K = 50) {
    const std::size_t n = scores.size();
    if (times.size() != n || events.size() != n)
        throw ValidationError("fit_isotonic: input lengths differ");
    if (n == 0) throw ValidationError("fit_isotonic: empty data");
    if (K < 2) throw ConfigError("fit_isotonic: K must be >= 2");

    const auto [lo_it, hi_it] = std::minmax_element(times.begin(), times.end());
    const double lo = *lo_it, hi = *hi_it;

    IsotonicCalibrator cal;
    cal.grid.resize(K);
    cal.maps.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        cal.grid[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(K - 1);

    std::vector<std::pair<double, double>> usable;  // (score, binary target)
    for (std::size_t k = 0; k < K; ++k) {
        const double tk = cal.grid[k];
        usable.clear();
        for (std::size_t i = 0; i < n; ++i) {
            if (times[i] > tk) {
                usable.emplace_back(scores[i], 1.0);
            } else if (events[i]) {
                usable.emplace_back(scores[i], 0.0);
            }  // censored at or before tk: excluded
        }
        IsotonicMap& map = cal.maps[k];
        if (usable.size() < 2) {
            map.degenerate = true;
            continue;
        }
        std::sort(usable.begin(), usable.end());
        // aggregate tied scores into weighted points
        std::vector<double> xs, ys, ws;
        std::size_t a = 0;
        while (a < usable.size()) {
            std::size_t b = a;
            double sum = 0.0;
            while (b < usable.size() && usable[b].first == usable[a].first) {
                sum += usable[b].second;
                ++b;
            }
            xs.push_back(usable[a].first);
            ys.push_back(sum / static_cast<double>(b - a));
            ws.push_back(static_cast<double>(b - a));
            a = b;
        }
        // PAV projects onto the non-increasing cone; negate for non-decreasing
        for (double& y : ys) y = -y;
        std::vector<double> fit = pav_isotonic_weighted(ys, ws);
        for (double& v : fit) v = -v;
        map.knot_scores = std::move(xs);
        map.knot_values = std::move(fit);
    }

    // degenerate points inherit the nearest earlier fitted map; leading
    // degenerates borrow from the first fitted one on the right
    std::ptrdiff_t first_ok = -1;
    for (std::size_t k = 0; k < K; ++k)
        if (!cal.maps[k].degenerate) {
            first_ok = static_cast<std::ptrdiff_t>(k);
            break;
        }
    if (first_ok < 0) throw NumericError("fit_isotonic: every grid point is degenerate");
    for (std::ptrdiff_t k = first_ok - 1; k >= 0; --k) {
        cal.maps[k].knot_scores = cal.maps[k + 1].knot_scores;
        cal.maps[k].knot_values = cal.maps[k + 1].knot_values;
    }
    for (std::size_t k = static_cast<std::size_t>(first_ok) + 1; k < K; ++k) {
        if (cal.maps[k].degenerate) {
            cal.maps[k].knot_scores = cal.maps[k - 1].knot_scores;
            cal.maps[k].knot_values = cal.maps[k - 1].knot_values;
        }
    }
    return cal;
}

// Diagnostic only: number of (probe score, adjacent grid pair) combinations
// where the calibrated curve rises with time. Crossings are reported, never
// repaired, because each time point is fitted independently.
inline std::size_t isotonic_crossing_count(const IsotonicCalibrator& cal,
                                           std::span<const double> probe_scores,
                                           double tol = 1e-12) {
    std::size_t count = 0;
    for (double s : probe_scores)
        for (std::size_t k = 0; k + 1 < cal.maps.size(); ++k)
            if (cal.maps[k + 1].at(s) > cal.maps[k].at(s) + tol) ++count;
    return count;
}

}  // namespace graft
