#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graft/errors.hpp"

namespace graft {

// Product-limit survival curve. Stores only the distinct times where events
// occur (the drop points); censoring times shape the curve through the risk
// sets. Right-continuous: surv_probs[k] is the value at and after
// event_times[k], and S(t) = 1 before the first event time.
struct KMCurve {
    std::vector<double> event_times;  // ascending, distinct
    std::vector<double> surv_probs;   // non-increasing, in [0, 1]
    std::size_t n_at_start = 0;
};

// Classic Kaplan-Meier fit. At tied times, events are processed before
// censorings: both are counted at the same clock time, the drop uses the
// risk set as of just before that time, and everyone tied leaves the risk
// set afterwards.
inline KMCurve fit_km(std::span<const double> times, std::span<const std::uint8_t> events) {
    if (times.empty()) throw ValidationError("fit_km: empty input");
    if (times.size() != events.size()) throw ValidationError("fit_km: size mismatch");

    std::vector<std::size_t> order(times.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    KMCurve km;
    km.n_at_start = times.size();
    double surv = 1.0;
    std::size_t at_risk = times.size();
    std::size_t i = 0;
    while (i < order.size()) {
        const double t = times[order[i]];
        std::size_t d = 0, c = 0;
        while (i < order.size() && times[order[i]] == t) {
            if (events[order[i]]) ++d; else ++c;
            ++i;
        }
        if (d > 0) {
            surv *= 1.0 - static_cast<double>(d) / static_cast<double>(at_risk);
            km.event_times.push_back(t);
            km.surv_probs.push_back(surv);
        }
        at_risk -= d + c;
    }
    return km;
}

// Right-continuous step evaluation: S(t) for t at an event time is the
// post-drop value; beyond the last drop the curve stays at its last value.
inline double survival_at(const KMCurve& km, double t) {
    auto it = std::upper_bound(km.event_times.begin(), km.event_times.end(), t);
    if (it == km.event_times.begin()) return 1.0;
    return km.surv_probs[static_cast<std::size_t>(it - km.event_times.begin()) - 1];
}

// Left limit S(t-): the value just before t. Used by IPCW weights.
inline double survival_before(const KMCurve& km, double t) {
    auto it = std::lower_bound(km.event_times.begin(), km.event_times.end(), t);
    if (it == km.event_times.begin()) return 1.0;
    return km.surv_probs[static_cast<std::size_t>(it - km.event_times.begin()) - 1];
}

// Conditional event-time law given survival beyond truncation_time, as a
// step CDF over the curve's remaining event times:
//   cdf(t) = 1 - S(t)/S(t_c),  t > t_c.
// total_mass < 1 when the curve has a defective tail (last subject in the
// fit was censored). Degenerate when no event time exceeds t_c or when
// S(t_c) = 0.
struct ConditionalCDF {
    double truncation_time = 0.0;
    std::vector<double> support;   // ascending event times > truncation_time
    std::vector<double> cdf_vals;  // non-decreasing, cdf_vals.back() == total_mass
    double total_mass = 0.0;
    bool degenerate = false;
};

inline ConditionalCDF condition_beyond(const KMCurve& km, double t_c) {
    ConditionalCDF out;
    out.truncation_time = t_c;
    const double s_tc = survival_at(km, t_c);
    if (s_tc <= 0.0) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t k = 0; k < km.event_times.size(); ++k) {
        if (km.event_times[k] > t_c) {
            out.support.push_back(km.event_times[k]);
            out.cdf_vals.push_back(1.0 - km.surv_probs[k] / s_tc);
        }
    }
    if (out.support.empty()) {
        out.degenerate = true;
        return out;
    }
    out.total_mass = out.cdf_vals.back();
    if (out.total_mass <= 0.0) out.degenerate = true;
    return out;
}

// Inverse-transform sample. u in [0, 1) is rescaled onto the available mass,
// so a defective tail truncates imputation at the last observed event time
// rather than producing unbounded draws.
inline double sample_time(const ConditionalCDF& cdf, double u) {
    if (cdf.degenerate) throw NumericError("sample_time: degenerate conditional distribution");
    const double target = u * cdf.total_mass;
    auto it = std::lower_bound(cdf.cdf_vals.begin(), cdf.cdf_vals.end(), target);
    if (it == cdf.cdf_vals.end()) --it;  // fp guard; cdf.back() == total_mass >= target
    return cdf.support[static_cast<std::size_t>(it - cdf.cdf_vals.begin())];
}

}  // namespace graft
