#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "graft/dataset.hpp"
#include "graft/errors.hpp"
#include "graft/km.hpp"
#include "graft/rng.hpp"

namespace graft {

// One row of the imputation table. Uncensored subjects carry a fixed target
// log(t_i); censored subjects carry the conditional distribution fitted on
// their neighborhood, or the fallback target when that distribution has no
// mass beyond t_i.
struct ImputationEntry {
    bool censored = false;
    double fixed_log_target = 0.0;  // log(t_i): the target for uncensored rows
                                    // and the fallback for degenerate ones
    std::vector<std::size_t> neighborhood;  // indices into the training set
    ConditionalCDF cdf;

    bool uses_fallback() const { return censored && cdf.degenerate; }
};

struct ImputationTable {
    std::vector<ImputationEntry> entries;
    std::size_t k_events = 10;
    std::string distance_metric = "euclidean_standardized";

    std::size_t n() const { return entries.size(); }
};

// Fixed conditional imputation distributions, one per training subject,
// computed once before training. For each censored subject the nearest-
// neighbor radius (Euclidean on the standardized features, self excluded)
// grows until at least k_events uncensored subjects lie inside; a KM curve
// is fitted on everyone inside that radius and conditioned beyond the
// subject's own censoring time.
inline ImputationTable build_table(const SurvivalDataset& ds, std::size_t k_events = 10) {
    if (ds.n_events() < k_events)
        throw ConfigError("build_table: training set has fewer than k_events uncensored subjects");

    const std::size_t n = ds.n(), p = ds.p();
    ImputationTable table;
    table.k_events = k_events;
    table.entries.resize(n);

    std::vector<std::pair<double, std::size_t>> order;  // (distance, index)
    order.reserve(n - 1);
    std::vector<double> nb_times, t_buf;
    std::vector<std::uint8_t> nb_events;

    for (std::size_t i = 0; i < n; ++i) {
        ImputationEntry& e = table.entries[i];
        e.fixed_log_target = std::log(ds.times[i]);
        if (ds.events[i]) continue;
        e.censored = true;

        order.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double d2 = 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                const double diff = ds.features(i, c) - ds.features(j, c);
                d2 += diff * diff;
            }
            order.emplace_back(d2, j);
        }
        std::sort(order.begin(), order.end());

        std::size_t cut = 0, events_seen = 0;
        while (cut < order.size() && events_seen < k_events) {
            if (ds.events[order[cut].second]) ++events_seen;
            ++cut;
        }
        // everything at exactly the boundary distance is inside the radius
        while (cut < order.size() && order[cut].first == order[cut - 1].first) ++cut;

        e.neighborhood.resize(cut);
        nb_times.resize(cut);
        nb_events.resize(cut);
        for (std::size_t a = 0; a < cut; ++a) {
            e.neighborhood[a] = order[a].second;
            nb_times[a] = ds.times[order[a].second];
            nb_events[a] = ds.events[order[a].second];
        }
        const KMCurve km = fit_km(nb_times, nb_events);
        e.cdf = condition_beyond(km, ds.times[i]);
    }
    return table;
}

// One Monte-Carlo target vector for a minibatch: log event times, imputed by
// inverse-transform sampling for censored subjects. Fallback entries consume
// no randomness.
inline std::vector<double> draw_targets(const ImputationTable& table,
                                        std::span<const std::size_t> batch, RngStream& rng) {
    std::vector<double> y(batch.size());
    for (std::size_t a = 0; a < batch.size(); ++a) {
        const ImputationEntry& e = table.entries.at(batch[a]);
        if (!e.censored || e.cdf.degenerate) {
            y[a] = e.fixed_log_target;
        } else {
            y[a] = std::log(sample_time(e.cdf, rng.uniform()));
        }
    }
    return y;
}

}  // namespace graft
