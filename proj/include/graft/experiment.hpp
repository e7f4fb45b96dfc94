#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "graft/calibration.hpp"
#include "graft/dataset.hpp"
#include "graft/errors.hpp"
#include "graft/metrics.hpp"
#include "graft/rng.hpp"
#include "graft/trainer.hpp"

namespace graft {

struct ExperimentConfig {
    std::string data_path;
    std::string time_col = "time";
    std::string event_col = "event";
    std::string dataset_name = "data";
    int folds = 3;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    TrainConfig train;
    std::vector<int> noise_multipliers = {0, 3, 5, 7, 10};
    NoiseDist noise_dist = NoiseDist::gaussian;
    std::vector<ModelVariant> variants = {ModelVariant::full, ModelVariant::no_stg,
                                          ModelVariant::linear_only};
    std::vector<GateVariant> gate_variants = {GateVariant::stg};
    std::string out_path;

    void validate() const {
        if (folds < 2) throw ConfigError("folds must be >= 2");
        if (seeds.empty()) throw ConfigError("seeds must be nonempty");
        for (int k : noise_multipliers)
            if (k < 0) throw ConfigError("noise multipliers must be >= 0");
        train.validate();
    }
};

struct RunCell {
    std::string dataset;
    std::string model;
    int noise_k = 0;
    std::uint64_t seed = 0;
    int fold = 0;
    double c_index = 0.0;
    double ibs = 0.0;
};

struct AggRow {
    std::string dataset;
    std::string model;
    int noise_k = 0;
    std::string metric;
    double mean = 0.0;
    double fold_std = 0.0;  // std across seeds of fold-averaged values
    double seed_std = 0.0;  // std across folds of seed-averaged values
};

struct ResultsTable {
    std::vector<RunCell> cells;
    std::vector<AggRow> rows;
};

// The per-run seed mixes (base seed, fold, model identity, noise level) so
// every run is independent and individually re-runnable. The model tag
// depends only on (variant, gate variant), so a noise-sweep stg run at k=0
// is the same run as the benchmark's full-variant run for the same seed.
inline std::uint64_t run_seed(std::uint64_t seed, int fold, ModelVariant variant,
                              GateVariant gate_variant, int k) {
    const std::uint64_t tag = static_cast<std::uint64_t>(variant) * 4ULL +
                              static_cast<std::uint64_t>(gate_variant);
    return mix_seed(seed, {static_cast<std::uint64_t>(fold), tag,
                           static_cast<std::uint64_t>(k)});
}

// One (seed, fold) run: train on the complement folds, score the held-out
// fold, C-index on scores, IBS on Cox-calibrated curves. Standardization,
// imputation, calibration, and the censoring curve all come from the
// training folds only.
inline std::pair<double, double> run_single(const SurvivalDataset& ds, const FoldSplit& split,
                                            int fold, const TrainConfig& run_cfg) {
    const std::vector<std::size_t> test_idx = split.fold_indices(fold);
    const std::vector<std::size_t> train_idx = split.complement_indices(fold);
    const SurvivalDataset train_ds = ds.subset(train_idx);
    const SurvivalDataset test_ds = ds.subset(test_idx);

    const TrainedModel model = train(train_ds, run_cfg);

    const std::vector<double> train_scores = predict_scores(model, train_ds.features);
    const CoxCalibrator cox = fit_cox_calibrator(train_scores, train_ds.times, train_ds.events);
    const KMCurve censor_km = fit_censoring_km(train_ds.times, train_ds.events);

    const std::vector<double> test_scores = predict_scores(model, test_ds.features);
    const double ci = c_index(test_scores, test_ds.times, test_ds.events);

    const EvalGrid grid = make_ibs_grid(test_ds.times, censor_km);
    const auto curve = [&](std::size_t i, double t) { return cox.survival(test_scores[i], t); };
    const double score = ibs(curve, test_ds.times, test_ds.events, grid, censor_km);
    return {ci, score};
}

// Mean per (dataset, model, noise_k) group plus two dispersion measures:
// spread across seeds of the per-seed fold averages, and across folds of the
// per-fold seed averages.
inline std::vector<AggRow> aggregate(const std::vector<RunCell>& cells) {
    using Key = std::tuple<std::string, std::string, int>;
    std::map<Key, std::vector<const RunCell*>> groups;
    for (const RunCell& c : cells) groups[{c.dataset, c.model, c.noise_k}].push_back(&c);

    std::vector<AggRow> rows;
    for (const auto& [key, group] : groups) {
        std::set<std::uint64_t> seed_set;
        std::set<int> fold_set;
        for (const RunCell* c : group) {
            seed_set.insert(c->seed);
            fold_set.insert(c->fold);
        }
        for (const std::string metric : {"c_index", "ibs"}) {
            const auto value = [&](const RunCell* c) {
                return metric == "c_index" ? c->c_index : c->ibs;
            };
            std::vector<double> all, fold_avgs, seed_avgs;
            for (std::uint64_t s : seed_set) {
                std::vector<double> vals;
                for (const RunCell* c : group)
                    if (c->seed == s) vals.push_back(value(c));
                fold_avgs.push_back(vec_mean(vals));
            }
            for (int f : fold_set) {
                std::vector<double> vals;
                for (const RunCell* c : group)
                    if (c->fold == f) vals.push_back(value(c));
                seed_avgs.push_back(vec_mean(vals));
            }
            for (const RunCell* c : group) all.push_back(value(c));
            AggRow row;
            row.dataset = std::get<0>(key);
            row.model = std::get<1>(key);
            row.noise_k = std::get<2>(key);
            row.metric = metric;
            row.mean = vec_mean(all);
            row.fold_std = vec_pop_std(fold_avgs);
            row.seed_std = vec_pop_std(seed_avgs);
            rows.push_back(row);
        }
    }
    return rows;
}

namespace detail {

// Shared sweep driver: crosses (seed, fold) x jobs, where a job fixes the
// model label, the train-config mutation, and the noise level.
struct SweepJob {
    std::string label;
    ModelVariant variant = ModelVariant::full;
    GateVariant gate_variant = GateVariant::stg;
    int noise_k = 0;
};

inline ResultsTable run_sweep(const SurvivalDataset& ds, const ExperimentConfig& cfg,
                              const std::vector<SweepJob>& jobs, NoiseDist dist) {
    cfg.validate();
    ResultsTable table;
    for (std::uint64_t seed : cfg.seeds) {
        // one noisy copy per (seed, k); identical across jobs at the same k
        std::map<int, SurvivalDataset> noisy;
        for (const SweepJob& job : jobs)
            if (!noisy.count(job.noise_k))
                noisy.emplace(job.noise_k, job.noise_k == 0
                                               ? ds
                                               : inject_noise(ds, job.noise_k, dist, seed));
        const FoldSplit split = stratified_kfold(ds, cfg.folds, seed);
        for (int fold = 0; fold < cfg.folds; ++fold) {
            for (const SweepJob& job : jobs) {
                TrainConfig run_cfg = cfg.train;
                run_cfg.variant = job.variant;
                run_cfg.gate_variant = job.gate_variant;
                run_cfg.seed = run_seed(seed, fold, job.variant, job.gate_variant, job.noise_k);
                const auto [ci, score] =
                    run_single(noisy.at(job.noise_k), split, fold, run_cfg);
                RunCell cell;
                cell.dataset = cfg.dataset_name;
                cell.model = job.label;
                cell.noise_k = job.noise_k;
                cell.seed = seed;
                cell.fold = fold;
                cell.c_index = ci;
                cell.ibs = score;
                table.cells.push_back(cell);
            }
        }
    }
    table.rows = aggregate(table.cells);
    return table;
}

}  // namespace detail

// Plain 3-fold x 3-seed protocol on the dataset as given.
inline ResultsTable run_benchmark(const SurvivalDataset& ds, const ExperimentConfig& cfg) {
    std::vector<detail::SweepJob> jobs(1);
    jobs[0].label = to_string(cfg.train.variant);
    jobs[0].variant = cfg.train.variant;
    jobs[0].gate_variant = cfg.train.gate_variant;
    return detail::run_sweep(ds, cfg, jobs, cfg.noise_dist);
}

// Architecture ablation: {full, no_stg, linear_only} x Gaussian noise
// multipliers.
inline ResultsTable run_ablation(const SurvivalDataset& ds, const ExperimentConfig& cfg) {
    std::vector<detail::SweepJob> jobs;
    for (ModelVariant v : cfg.variants) {
        for (int k : cfg.noise_multipliers) {
            detail::SweepJob job;
            job.label = to_string(v);
            job.variant = v;
            job.gate_variant = cfg.train.gate_variant;
            job.noise_k = k;
            jobs.push_back(job);
        }
    }
    return detail::run_sweep(ds, cfg, jobs, NoiseDist::gaussian);
}

// Gating robustness sweep: requested gate variants x heavy-tailed noise
// multipliers (Student-t with 2 degrees of freedom by default).
inline ResultsTable run_noise_sweep(const SurvivalDataset& ds, const ExperimentConfig& cfg) {
    std::vector<detail::SweepJob> jobs;
    for (GateVariant gv : cfg.gate_variants) {
        for (int k : cfg.noise_multipliers) {
            detail::SweepJob job;
            job.label = to_string(gv);
            job.variant = ModelVariant::full;
            job.gate_variant = gv;
            job.noise_k = k;
            jobs.push_back(job);
        }
    }
    return detail::run_sweep(ds, cfg, jobs, cfg.noise_dist);
}

// ---- renderings ----

inline std::string format_double(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

inline std::string results_to_csv(const ResultsTable& table) {
    std::string out = "dataset,model,noise_k,metric,mean,fold_std,seed_std\n";
    for (const AggRow& r : table.rows) {
        out += r.dataset + "," + r.model + "," + std::to_string(r.noise_k) + "," + r.metric +
               "," + format_double(r.mean) + "," + format_double(r.fold_std) + "," +
               format_double(r.seed_std) + "\n";
    }
    return out;
}

inline nlohmann::ordered_json results_to_json(const ExperimentConfig& cfg,
                                              const ResultsTable& table) {
    nlohmann::ordered_json j;
    j["config"] = {{"data", cfg.data_path},
                   {"time_col", cfg.time_col},
                   {"event_col", cfg.event_col},
                   {"dataset_name", cfg.dataset_name},
                   {"folds", cfg.folds},
                   {"seeds", cfg.seeds},
                   {"noise_multipliers", cfg.noise_multipliers},
                   {"noise_dist", to_string(cfg.noise_dist)}};
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const RunCell& c : table.cells)
        cells.push_back({{"dataset", c.dataset},
                         {"model", c.model},
                         {"noise_k", c.noise_k},
                         {"seed", c.seed},
                         {"fold", c.fold},
                         {"c_index", c.c_index},
                         {"ibs", c.ibs}});
    j["cells"] = std::move(cells);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const AggRow& r : table.rows)
        rows.push_back({{"dataset", r.dataset},
                        {"model", r.model},
                        {"noise_k", r.noise_k},
                        {"metric", r.metric},
                        {"mean", r.mean},
                        {"fold_std", r.fold_std},
                        {"seed_std", r.seed_std}});
    j["rows"] = std::move(rows);
    return j;
}

// Aligned text table in the "Mean (Fold-Std, Seed-Std)" layout.
inline std::string results_to_text(const ResultsTable& table) {
    std::vector<std::array<std::string, 5>> lines;
    lines.push_back({"dataset", "model", "noise_k", "metric", "mean (fold-std, seed-std)"});
    for (const AggRow& r : table.rows)
        lines.push_back({r.dataset, r.model, std::to_string(r.noise_k), r.metric,
                         format_double(r.mean, 4) + " (" + format_double(r.fold_std, 4) + ", " +
                             format_double(r.seed_std, 4) + ")"});
    std::array<std::size_t, 5> width{};
    for (const auto& line : lines)
        for (std::size_t c = 0; c < 5; ++c) width[c] = std::max(width[c], line[c].size());
    std::string out;
    for (const auto& line : lines) {
        for (std::size_t c = 0; c < 5; ++c) {
            out += line[c];
            if (c + 1 < 5) out += std::string(width[c] - line[c].size() + 2, ' ');
        }
        out += "\n";
    }
    return out;
}

}  // namespace graft
