// Command-line front end: dataset synthesis, training, evaluation, the
// imputation audit, and the three experiment protocols. All outputs are
// deterministic for a fixed config + seeds (no timestamps, fixed formats).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "graft/graft.hpp"

namespace {

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

graft::ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    graft::ExperimentConfig cfg;
    if (j.contains("data")) cfg.data_path = j.at("data").get<std::string>();
    if (j.contains("time_col")) cfg.time_col = j.at("time_col").get<std::string>();
    if (j.contains("event_col")) cfg.event_col = j.at("event_col").get<std::string>();
    if (j.contains("dataset_name")) cfg.dataset_name = j.at("dataset_name").get<std::string>();
    if (j.contains("folds")) cfg.folds = j.at("folds").get<int>();
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train")) cfg.train = graft::config_from_json(j.at("train"));
    if (j.contains("noise_multipliers"))
        cfg.noise_multipliers = j.at("noise_multipliers").get<std::vector<int>>();
    if (j.contains("noise_dist"))
        cfg.noise_dist = graft::noise_dist_from_string(j.at("noise_dist").get<std::string>());
    if (j.contains("variants")) {
        cfg.variants.clear();
        for (const auto& v : j.at("variants"))
            cfg.variants.push_back(graft::model_variant_from_string(v.get<std::string>()));
    }
    if (j.contains("gate_variants")) {
        cfg.gate_variants.clear();
        for (const auto& v : j.at("gate_variants"))
            cfg.gate_variants.push_back(graft::gate_variant_from_string(v.get<std::string>()));
    }
    if (j.contains("out")) cfg.out_path = j.at("out").get<std::string>();
    return cfg;
}

nlohmann::json load_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(graft::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw graft::ParseError(path + ": " + e.what());
    }
}

// Options shared by every data-consuming subcommand.
struct DataOpts {
    std::string data;
    std::string time_col = "time";
    std::string event_col = "event";

    void attach(CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--data", data, "input CSV with a header row");
        if (required) opt->required();
        cmd->add_option("--time-col", time_col, "name of the time column");
        cmd->add_option("--event-col", event_col, "name of the 0/1 event column");
    }

    graft::SurvivalDataset load() const { return graft::load_csv(data, time_col, event_col); }
};

void write_dataset_csv(const graft::SurvivalDataset& ds, const std::string& path) {
    std::string out;
    for (const std::string& name : ds.feature_names) out += name + ",";
    out += "time,event\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.p(); ++j) out += fmt_full(ds.features(i, j)) + ",";
        out += fmt_full(ds.times[i]) + "," + (ds.events[i] ? "1" : "0") + "\n";
    }
    graft::write_text_file(path, out);
}

struct SweepFlags {
    DataOpts data;
    std::string config_path, out_prefix, dataset_name;
    std::vector<std::uint64_t> seeds;
    int folds = 0;
    std::vector<int> multipliers;
    std::string noise_dist;
    std::uint64_t train_seed = 0;  // unused; per-run seeds are derived

    void attach(CLI::App* cmd) {
        data.attach(cmd, /*required=*/false);
        cmd->add_option("--config", config_path, "JSON experiment config");
        cmd->add_option("--seeds", seeds, "base seeds")->delimiter(',');
        cmd->add_option("--folds", folds, "cross-validation folds");
        cmd->add_option("--out", out_prefix, "output prefix; writes <out>.csv and <out>.json");
        cmd->add_option("--dataset-name", dataset_name, "label used in result rows");
        cmd->add_option("--multipliers", multipliers, "noise multipliers")->delimiter(',');
        cmd->add_option("--noise-dist", noise_dist, "gaussian | student_t_df2");
    }

    graft::ExperimentConfig resolve() const {
        graft::ExperimentConfig cfg;
        if (!config_path.empty()) cfg = experiment_config_from_json(load_json_file(config_path));
        if (!data.data.empty()) cfg.data_path = data.data;
        if (data.time_col != "time" || cfg.time_col.empty()) cfg.time_col = data.time_col;
        if (data.event_col != "event" || cfg.event_col.empty()) cfg.event_col = data.event_col;
        if (!seeds.empty()) cfg.seeds = seeds;
        if (folds > 0) cfg.folds = folds;
        if (!out_prefix.empty()) cfg.out_path = out_prefix;
        if (!dataset_name.empty()) cfg.dataset_name = dataset_name;
        if (!multipliers.empty()) cfg.noise_multipliers = multipliers;
        if (!noise_dist.empty()) cfg.noise_dist = graft::noise_dist_from_string(noise_dist);
        if (cfg.data_path.empty())
            throw graft::ConfigError("no dataset given (use --data or the config file)");
        return cfg;
    }
};

void emit_results(const graft::ExperimentConfig& cfg, const graft::ResultsTable& table) {
    std::cout << graft::results_to_text(table);
    if (!cfg.out_path.empty()) {
        graft::write_text_file(cfg.out_path + ".csv", graft::results_to_csv(table));
        graft::write_text_file(cfg.out_path + ".json",
                               graft::results_to_json(cfg, table).dump(2) + "\n");
        std::cout << "wrote " << cfg.out_path << ".csv and " << cfg.out_path << ".json\n";
    }
}

int run(int argc, char** argv) {
    CLI::App app{"gated residual AFT survival modeling"};
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic survival dataset");
    struct {
        std::size_t n = 500, p = 10, signal = 3;
        double censor_frac = 0.3;
        std::uint64_t seed = 1;
        std::string out;
    } sy;
    synth->add_option("--n", sy.n, "number of subjects");
    synth->add_option("--p", sy.p, "number of features");
    synth->add_option("--signal", sy.signal, "number of signal features");
    synth->add_option("--censor-frac", sy.censor_frac, "target censoring fraction");
    synth->add_option("--seed", sy.seed, "generator seed");
    synth->add_option("--out", sy.out, "output CSV path")->required();
    synth->callback([&] {
        const graft::SyntheticData sd =
            graft::generate_synthetic(sy.n, sy.p, sy.signal, sy.censor_frac, sy.seed);
        write_dataset_csv(sd.data, sy.out);
        std::cout << "wrote " << sy.out << " (" << sd.data.n() << " rows, " << sd.data.p()
                  << " features, " << sd.data.n_events() << " events)\n";
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "fit a model and save it with its calibrators");
    struct {
        DataOpts data;
        std::string config_path, out, variant, gate_variant;
        std::int64_t seed = -1;
    } t;
    t.data.attach(tr);
    tr->add_option("--config", t.config_path, "JSON training config");
    tr->add_option("--seed", t.seed, "training seed (overrides config)");
    tr->add_option("--variant", t.variant, "full | no_stg | linear_only");
    tr->add_option("--gate-variant", t.gate_variant, "stg | sigmoid | reinforce");
    tr->add_option("--out", t.out, "model output path")->required();
    tr->callback([&] {
        graft::TrainConfig cfg;
        if (!t.config_path.empty()) {
            const nlohmann::json j = load_json_file(t.config_path);
            cfg = graft::config_from_json(j.contains("train") ? j.at("train") : j);
        }
        if (t.seed >= 0) cfg.seed = static_cast<std::uint64_t>(t.seed);
        if (!t.variant.empty()) cfg.variant = graft::model_variant_from_string(t.variant);
        if (!t.gate_variant.empty())
            cfg.gate_variant = graft::gate_variant_from_string(t.gate_variant);
        const graft::SurvivalDataset ds = t.data.load();
        graft::TrainedModel model = graft::train(ds, cfg);
        const graft::ModelBundle bundle = graft::make_bundle(std::move(model), ds);
        graft::save_model_bundle(bundle, t.out);
        const std::vector<double> g = graft::deterministic_gates(bundle.model.gates);
        std::size_t open = 0;
        for (double v : g)
            if (v > 0.0) ++open;
        std::cout << "trained " << graft::to_string(bundle.model.config.variant) << " model: "
                  << bundle.model.epochs_run << " epochs (best " << bundle.model.best_epoch
                  << ", val loss " << graft::format_double(bundle.model.best_val_loss, 6)
                  << "), " << open << "/" << g.size() << " gates open\n"
                  << "wrote " << t.out << "\n";
    });

    // ---- evaluate ----
    auto* ev = app.add_subcommand("evaluate", "score a dataset with a saved model");
    struct {
        DataOpts data;
        std::string model, out, dump_gates, curves, calibrator = "cox";
        std::size_t curve_points = 50;
    } e;
    e.data.attach(ev);
    ev->add_option("--model", e.model, "model file from `train`")->required();
    ev->add_option("--out", e.out, "metrics JSON path (default: stdout)");
    ev->add_option("--dump-gates", e.dump_gates, "write per-feature gate CSV here");
    ev->add_option("--curves", e.curves, "write per-subject survival curves CSV here");
    ev->add_option("--curve-points", e.curve_points, "time-grid size for --curves");
    ev->add_option("--calibrator", e.calibrator, "cox | isotonic (for --curves)");
    ev->callback([&] {
        const graft::ModelBundle bundle = graft::load_model_bundle(e.model);
        const graft::SurvivalDataset ds = e.data.load();
        const std::vector<double> scores = graft::predict_scores(bundle.model, ds.features);
        const double ci = graft::c_index(scores, ds.times, ds.events);
        const graft::EvalGrid grid = graft::make_ibs_grid(ds.times, bundle.censor_km);
        const auto curve = [&](std::size_t i, double t) {
            return bundle.cox.survival(scores[i], t);
        };
        const double score_ibs =
            graft::ibs(curve, ds.times, ds.events, grid, bundle.censor_km);

        nlohmann::ordered_json j;
        j["n"] = ds.n();
        j["n_events"] = ds.n_events();
        j["c_index"] = ci;
        j["ibs"] = score_ibs;
        j["cox"] = {{"beta", bundle.cox.fit.beta}, {"diverged", bundle.cox.fit.diverged}};
        const std::string text = j.dump(2) + "\n";
        if (e.out.empty())
            std::cout << text;
        else {
            graft::write_text_file(e.out, text);
            std::cout << "c_index " << graft::format_double(ci, 6) << "  ibs "
                      << graft::format_double(score_ibs, 6) << "\nwrote " << e.out << "\n";
        }

        if (!e.dump_gates.empty()) {
            const std::vector<double> g = graft::deterministic_gates(bundle.model.gates);
            std::string csv = "feature_name,eta,deterministic_gate\n";
            for (std::size_t jx = 0; jx < g.size(); ++jx)
                csv += bundle.model.feature_names[jx] + "," +
                       fmt_full(bundle.model.gates.eta[jx]) + "," + fmt_full(g[jx]) + "\n";
            graft::write_text_file(e.dump_gates, csv);
            std::cout << "wrote " << e.dump_gates << "\n";
        }

        if (!e.curves.empty()) {
            if (e.curve_points < 2) throw graft::ConfigError("--curve-points must be >= 2");
            const bool use_iso = e.calibrator == "isotonic";
            if (!use_iso && e.calibrator != "cox")
                throw graft::ConfigError("--calibrator must be cox or isotonic");
            const auto [lo_it, hi_it] = std::minmax_element(ds.times.begin(), ds.times.end());
            std::string csv = "subject_id,t,S\n";
            for (std::size_t i = 0; i < ds.n(); ++i) {
                for (std::size_t k = 0; k < e.curve_points; ++k) {
                    const double tq = *lo_it + (*hi_it - *lo_it) * static_cast<double>(k) /
                                                   static_cast<double>(e.curve_points - 1);
                    const double s = use_iso ? bundle.isotonic.survival(scores[i], tq)
                                             : bundle.cox.survival(scores[i], tq);
                    csv += std::to_string(i + 1) + "," + fmt_full(tq) + "," + fmt_full(s) + "\n";
                }
            }
            graft::write_text_file(e.curves, csv);
            std::cout << "wrote " << e.curves << "\n";
        }
    });

    // ---- impute-check ----
    auto* ic = app.add_subcommand("impute-check",
                                  "audit the imputation neighborhoods and conditionals");
    struct {
        DataOpts data;
        std::string out;
        std::size_t k_events = 10;
    } im;
    im.data.attach(ic);
    ic->add_option("--k-events", im.k_events, "minimum events per neighborhood");
    ic->add_option("--out", im.out, "output CSV path")->required();
    ic->callback([&] {
        const graft::SurvivalDataset raw = im.data.load();
        const auto [ds, scaler] = graft::standardize(raw);
        const graft::ImputationTable table = graft::build_table(ds, im.k_events);
        std::string csv =
            "subject_id,censored,neighborhood_size,neighborhood_events,support_size,total_mass,"
            "degenerate\n";
        for (std::size_t i = 0; i < table.n(); ++i) {
            const graft::ImputationEntry& en = table.entries[i];
            std::size_t nb_events = 0;
            for (std::size_t j : en.neighborhood) nb_events += ds.events[j];
            csv += std::to_string(i + 1) + "," + (en.censored ? "1" : "0") + "," +
                   std::to_string(en.neighborhood.size()) + "," + std::to_string(nb_events) +
                   "," + std::to_string(en.cdf.support.size()) + "," +
                   fmt_full(en.censored ? en.cdf.total_mass : 0.0) + "," +
                   (en.uses_fallback() ? "1" : "0") + "\n";
        }
        graft::write_text_file(im.out, csv);
        std::size_t censored = 0, fallback = 0;
        for (const auto& en : table.entries) {
            censored += en.censored;
            fallback += en.uses_fallback();
        }
        std::cout << "wrote " << im.out << " (" << censored << " censored subjects, " << fallback
                  << " fallback targets)\n";
    });

    // ---- experiment protocols ----
    auto* bench = app.add_subcommand("benchmark", "k-fold x seeds protocol on the dataset");
    auto bench_flags = std::make_shared<SweepFlags>();
    bench_flags->attach(bench);
    bench->callback([bench_flags] {
        graft::ExperimentConfig cfg = bench_flags->resolve();
        const graft::SurvivalDataset ds =
            graft::load_csv(cfg.data_path, cfg.time_col, cfg.event_col);
        emit_results(cfg, graft::run_benchmark(ds, cfg));
    });

    auto* abl = app.add_subcommand(
        "ablation", "variants {full, no_stg, linear_only} x Gaussian noise multipliers");
    auto abl_flags = std::make_shared<SweepFlags>();
    abl_flags->attach(abl);
    abl->callback([abl_flags] {
        graft::ExperimentConfig cfg = abl_flags->resolve();
        const graft::SurvivalDataset ds =
            graft::load_csv(cfg.data_path, cfg.time_col, cfg.event_col);
        emit_results(cfg, graft::run_ablation(ds, cfg));
    });

    auto* ns = app.add_subcommand("noise-sweep",
                                  "gate variants x heavy-tailed noise multipliers");
    auto ns_flags = std::make_shared<SweepFlags>();
    ns_flags->attach(ns);
    auto gate_variants = std::make_shared<std::vector<std::string>>();
    ns->add_option("--gate-variants", *gate_variants, "stg | sigmoid | reinforce")
        ->delimiter(',');
    ns->callback([ns_flags, gate_variants] {
        graft::ExperimentConfig cfg = ns_flags->resolve();
        if (ns_flags->noise_dist.empty() && ns_flags->config_path.empty())
            cfg.noise_dist = graft::NoiseDist::student_t_df2;
        if (!gate_variants->empty()) {
            cfg.gate_variants.clear();
            for (const std::string& s : *gate_variants)
                cfg.gate_variants.push_back(graft::gate_variant_from_string(s));
        }
        const graft::SurvivalDataset ds =
            graft::load_csv(cfg.data_path, cfg.time_col, cfg.event_col);
        emit_results(cfg, graft::run_noise_sweep(ds, cfg));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and friends exit 0; every flag/usage problem is a validation
        // failure and must map to 1, not CLI11's own code
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const graft::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
