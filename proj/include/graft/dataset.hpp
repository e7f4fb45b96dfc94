#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graft/errors.hpp"
#include "graft/matrix.hpp"
#include "graft/rng.hpp"

namespace graft {

// Right-censored survival data: one row per subject, an observed time and an
// event flag (1 = event, 0 = censored), plus a numeric feature matrix.
struct SurvivalDataset {
    Matrix features;                         // N x p
    std::vector<double> times;               // strictly positive
    std::vector<std::uint8_t> events;        // 0/1
    std::vector<std::string> feature_names;  // size p

    std::size_t n() const { return times.size(); }
    std::size_t p() const { return features.cols; }

    std::size_t n_events() const {
        std::size_t c = 0;
        for (auto e : events) c += e;
        return c;
    }

    void validate() const {
        if (features.rows != times.size() || times.size() != events.size())
            throw ValidationError("dataset: row count mismatch across fields");
        if (features.cols == 0) throw ValidationError("dataset: needs at least one feature");
        if (feature_names.size() != features.cols)
            throw ValidationError("dataset: feature name count mismatch");
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (!(times[i] > 0.0))
                throw ValidationError("dataset row " + std::to_string(i + 1) + ": time must be > 0");
            if (events[i] > 1)
                throw ValidationError("dataset row " + std::to_string(i + 1) + ": event must be 0 or 1");
        }
    }

    SurvivalDataset subset(std::span<const std::size_t> idx) const {
        SurvivalDataset out;
        out.features = Matrix(idx.size(), p());
        out.times.resize(idx.size());
        out.events.resize(idx.size());
        out.feature_names = feature_names;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const std::size_t i = idx[r];
            for (std::size_t j = 0; j < p(); ++j) out.features(r, j) = features(i, j);
            out.times[r] = times[i];
            out.events[r] = events[i];
        }
        return out;
    }
};

// Per-column means/stds learned on training data. Constant columns keep
// std 1 so the transform stays well defined (they map to all zeros).
struct ScalerParams {
    std::vector<double> means;
    std::vector<double> stds;
};

struct FoldSplit {
    std::vector<int> assignments;  // size N, values in [0, n_folds)
    int n_folds = 0;
    std::uint64_t seed = 0;

    std::vector<std::size_t> fold_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] == fold) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> complement_indices(int fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i)
            if (assignments[i] != fold) out.push_back(i);
        return out;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

// Locale-independent double parse ('.' decimal separator only).
inline double parse_double(const std::string& cell, std::size_t row, const std::string& col) {
    const std::string t = trim(cell);
    double value = 0.0;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw ParseError("row " + std::to_string(row) + ", column '" + col + "': cannot parse '" + t + "' as a number");
    return value;
}

}  // namespace detail

// Loads a headered CSV. `time_col` and `event_col` name the outcome columns;
// every remaining column becomes a feature, in file order. No missing-value
// support: an empty or non-numeric cell is an error.
inline SurvivalDataset load_csv(const std::string& path, const std::string& time_col,
                                const std::string& event_col) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw SchemaError(path + ": empty file, expected a header row");
    const auto header = detail::split_csv_line(line);

    std::ptrdiff_t time_idx = -1, event_idx = -1;
    std::vector<std::size_t> feat_cols;
    std::vector<std::string> names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const std::string name = detail::trim(header[j]);
        if (name == time_col) {
            time_idx = static_cast<std::ptrdiff_t>(j);
        } else if (name == event_col) {
            event_idx = static_cast<std::ptrdiff_t>(j);
        } else {
            feat_cols.push_back(j);
            names.push_back(name);
        }
    }
    if (time_idx < 0) throw SchemaError(path + ": missing time column '" + time_col + "'");
    if (event_idx < 0) throw SchemaError(path + ": missing event column '" + event_col + "'");
    if (feat_cols.empty()) throw SchemaError(path + ": no feature columns besides time/event");

    std::vector<double> times;
    std::vector<std::uint8_t> events;
    std::vector<double> feat_data;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        ++row;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        const double t = detail::parse_double(cells[static_cast<std::size_t>(time_idx)], row, time_col);
        if (!(t > 0.0))
            throw ValidationError("row " + std::to_string(row) + ": time must be > 0, got " + std::to_string(t));
        const double e = detail::parse_double(cells[static_cast<std::size_t>(event_idx)], row, event_col);
        if (e != 0.0 && e != 1.0)
            throw ValidationError("row " + std::to_string(row) + ": event must be 0 or 1");
        times.push_back(t);
        events.push_back(static_cast<std::uint8_t>(e));
        for (std::size_t j : feat_cols) feat_data.push_back(detail::parse_double(cells[j], row, detail::trim(header[j])));
    }
    if (times.empty()) throw ValidationError(path + ": no data rows");

    SurvivalDataset ds;
    ds.times = std::move(times);
    ds.events = std::move(events);
    ds.feature_names = std::move(names);
    ds.features = Matrix(ds.times.size(), feat_cols.size());
    ds.features.data = std::move(feat_data);
    ds.validate();
    return ds;
}

inline Matrix apply_scaler(const Matrix& X, const ScalerParams& sc) {
    if (X.cols != sc.means.size())
        throw ValidationError("apply_scaler: feature count mismatch (" + std::to_string(X.cols) +
                              " vs scaler " + std::to_string(sc.means.size()) + ")");
    Matrix out(X.rows, X.cols);
    for (std::size_t i = 0; i < X.rows; ++i)
        for (std::size_t j = 0; j < X.cols; ++j) out(i, j) = (X(i, j) - sc.means[j]) / sc.stds[j];
    return out;
}

inline SurvivalDataset apply_scaler(const SurvivalDataset& ds, const ScalerParams& sc) {
    SurvivalDataset out = ds;
    out.features = apply_scaler(ds.features, sc);
    return out;
}

// Column-wise standardization to mean 0 / sample std 1, fitted on `ds`.
// Constant columns get std recorded as 1 and standardize to all zeros.
inline std::pair<SurvivalDataset, ScalerParams> standardize(const SurvivalDataset& ds) {
    if (ds.n() < 2) throw ValidationError("standardize: needs at least 2 rows");
    ScalerParams sc;
    sc.means.resize(ds.p());
    sc.stds.resize(ds.p());
    std::vector<double> col(ds.n());
    for (std::size_t j = 0; j < ds.p(); ++j) {
        for (std::size_t i = 0; i < ds.n(); ++i) col[i] = ds.features(i, j);
        sc.means[j] = vec_mean(col);
        const double s = vec_sample_std(col);
        sc.stds[j] = (s > 0.0) ? s : 1.0;
    }
    return {apply_scaler(ds, sc), sc};
}

enum class NoiseDist { gaussian, student_t_df2 };

inline std::string to_string(NoiseDist d) {
    return d == NoiseDist::gaussian ? "gaussian" : "student_t_df2";
}

inline NoiseDist noise_dist_from_string(const std::string& s) {
    if (s == "gaussian") return NoiseDist::gaussian;
    if (s == "student_t_df2" || s == "t2") return NoiseDist::student_t_df2;
    throw ConfigError("unknown noise distribution: " + s);
}

// Appends k*p i.i.d. noise columns to the feature matrix. The original
// columns are copied bit-for-bit; the appended block is reproducible from
// the seed alone.
inline SurvivalDataset inject_noise(const SurvivalDataset& ds, int k, NoiseDist dist, std::uint64_t seed) {
    if (k < 1) throw ConfigError("inject_noise: k must be >= 1");
    const std::size_t p0 = ds.p();
    const std::size_t p_noise = p0 * static_cast<std::size_t>(k);
    SurvivalDataset out;
    out.times = ds.times;
    out.events = ds.events;
    out.feature_names = ds.feature_names;
    for (std::size_t j = 0; j < p_noise; ++j) out.feature_names.push_back("noise_" + std::to_string(j + 1));
    out.features = Matrix(ds.n(), p0 + p_noise);
    RngStream rng(mix_seed(seed, {0x6e6f697365ULL, static_cast<std::uint64_t>(k)}));
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < p0; ++j) out.features(i, j) = ds.features(i, j);
        for (std::size_t j = 0; j < p_noise; ++j)
            out.features(i, p0 + j) = (dist == NoiseDist::gaussian) ? rng.normal() : rng.student_t2();
    }
    return out;
}

struct SyntheticData {
    SurvivalDataset data;
    std::vector<double> true_beta;
};

// Linear log-time generator: log T = x' beta + mu + eps with Gaussian eps,
// standard normal features and exactly n_signal nonzero coefficients.
// Censoring times are uniform on (0, c_max), drawn without looking at the
// event times, with c_max binary-searched to land the requested censoring
// fraction.
inline SyntheticData generate_synthetic(std::size_t n, std::size_t p, std::size_t n_signal,
                                        double censor_frac, std::uint64_t seed) {
    if (n_signal > p) throw ConfigError("generate_synthetic: n_signal must be <= p");
    if (censor_frac < 0.0 || censor_frac >= 1.0)
        throw ConfigError("generate_synthetic: censor_frac must be in [0, 1)");
    if (n < 2) throw ConfigError("generate_synthetic: n must be >= 2");

    constexpr double kNoiseStd = 0.5;
    constexpr double kIntercept = 2.0;

    RngStream rng(mix_seed(seed, {0x73796e7468ULL}));
    SyntheticData out;
    out.true_beta.assign(p, 0.0);
    for (std::size_t j = 0; j < n_signal; ++j)
        out.true_beta[j] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.8 + 0.4 * rng.uniform());

    SurvivalDataset& ds = out.data;
    ds.features = Matrix(n, p);
    ds.times.resize(n);
    ds.events.resize(n);
    for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));

    std::vector<double> event_time(n);
    for (std::size_t i = 0; i < n; ++i) {
        double lin = kIntercept;
        for (std::size_t j = 0; j < p; ++j) {
            const double x = rng.normal();
            ds.features(i, j) = x;
            lin += x * out.true_beta[j];
        }
        event_time[i] = std::exp(lin + kNoiseStd * rng.normal());
    }

    if (censor_frac == 0.0) {
        ds.times = event_time;
        std::fill(ds.events.begin(), ds.events.end(), std::uint8_t{1});
        return out;
    }

    // Censoring uniforms are fixed first, then c_max is tuned: C_i = c_max * u_i.
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = rng.uniform_pos();

    auto censored_frac_at = [&](double c_max) {
        std::size_t c = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (event_time[i] > c_max * u[i]) ++c;
        return static_cast<double>(c) / static_cast<double>(n);
    };

    double lo = 1e-12, hi = 1.0;
    while (censored_frac_at(hi) > censor_frac) hi *= 2.0;  // larger c_max -> fewer censored
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (censored_frac_at(mid) > censor_frac)
            lo = mid;
        else
            hi = mid;
    }
    const double c_max = hi;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = c_max * u[i];
        if (event_time[i] <= c) {
            ds.times[i] = event_time[i];
            ds.events[i] = 1;
        } else {
            ds.times[i] = c;
            ds.events[i] = 0;
        }
    }
    return out;
}

// Stratified k-fold assignment. Subjects are grouped by event indicator,
// each stratum is shuffled and dealt round-robin with a fold cursor shared
// across strata, so both per-stratum and total fold sizes differ by at most
// one. Deterministic per seed.
inline FoldSplit stratified_kfold(const SurvivalDataset& ds, int folds, std::uint64_t seed) {
    if (folds < 2) throw ConfigError("stratified_kfold: folds must be >= 2");
    if (static_cast<std::size_t>(folds) > ds.n())
        throw ConfigError("stratified_kfold: more folds than subjects");

    FoldSplit split;
    split.assignments.assign(ds.n(), -1);
    split.n_folds = folds;
    split.seed = seed;

    RngStream rng(mix_seed(seed, {0x666f6c64ULL, static_cast<std::uint64_t>(folds)}));
    std::vector<std::size_t> strata[2];
    for (std::size_t i = 0; i < ds.n(); ++i) strata[ds.events[i] ? 1 : 0].push_back(i);

    int cursor = 0;
    for (auto& stratum : strata) {
        rng.shuffle(stratum);
        for (std::size_t i : stratum) {
            split.assignments[i] = cursor;
            cursor = (cursor + 1) % folds;
        }
    }
    return split;
}

}  // namespace graft
