#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graft/calibration.hpp"
#include "graft/dataset.hpp"
#include "graft/km.hpp"
#include "graft/metrics.hpp"
#include "graft/trainer.hpp"

namespace graft {

using ordered_json = nlohmann::ordered_json;

// Everything `evaluate` needs downstream of a training run: the scorer plus
// the calibrators and censoring curve fitted on the same training data.
struct ModelBundle {
    TrainedModel model;
    CoxCalibrator cox;
    IsotonicCalibrator isotonic;
    KMCurve censor_km;
};

inline ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["lr"] = cfg.lr;
    j["alpha_l2"] = cfg.alpha_l2;
    j["lambda_l0"] = cfg.lambda_l0;
    j["batch_size"] = cfg.batch_size;
    j["mc_samples"] = cfg.mc_samples;
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["tau"] = cfg.tau;
    j["sigma"] = cfg.sigma;
    j["d_h"] = cfg.d_h;
    j["dropout"] = cfg.dropout;
    j["seed"] = cfg.seed;
    j["variant"] = to_string(cfg.variant);
    j["gate_variant"] = to_string(cfg.gate_variant);
    j["k_events"] = cfg.k_events;
    return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    if (j.contains("lr")) cfg.lr = j.at("lr").get<double>();
    if (j.contains("alpha_l2")) cfg.alpha_l2 = j.at("alpha_l2").get<double>();
    if (j.contains("lambda_l0")) cfg.lambda_l0 = j.at("lambda_l0").get<double>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("mc_samples")) cfg.mc_samples = j.at("mc_samples").get<std::size_t>();
    if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<std::size_t>();
    if (j.contains("patience")) cfg.patience = j.at("patience").get<std::size_t>();
    if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
    if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
    if (j.contains("d_h")) cfg.d_h = j.at("d_h").get<std::size_t>();
    if (j.contains("dropout")) cfg.dropout = j.at("dropout").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("variant")) cfg.variant = model_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("gate_variant"))
        cfg.gate_variant = gate_variant_from_string(j.at("gate_variant").get<std::string>());
    if (j.contains("k_events")) cfg.k_events = j.at("k_events").get<std::size_t>();
    return cfg;
}

inline ordered_json bundle_to_json(const ModelBundle& b) {
    const TrainedModel& m = b.model;
    ordered_json j;
    j["format"] = "graft-model";
    j["version"] = 1;
    j["config"] = config_to_json(m.config);
    j["scaler"] = {{"means", m.scaler.means}, {"stds", m.scaler.stds}};
    j["feature_names"] = m.feature_names;
    j["gates"] = {{"variant", to_string(m.gates.variant)},
                  {"eta", m.gates.eta},
                  {"sigma", m.gates.sigma},
                  {"lambda_l0", m.gates.lambda_l0}};
    j["net"] = {{"arch_variant", to_string(m.net.arch_variant)},
                {"d_h", m.net.d_h},
                {"dropout_rate", m.net.dropout_rate},
                {"W1", m.net.W1.data},
                {"b1", m.net.b1},
                {"W2", m.net.W2.data},
                {"b2", m.net.b2},
                {"beta", m.net.beta},
                {"mu", m.net.mu}};
    j["meta"] = {{"epochs_run", m.epochs_run},
                 {"best_epoch", m.best_epoch},
                 {"best_val_loss", m.best_val_loss}};

    ordered_json cal;
    cal["cox"] = {{"beta", b.cox.fit.beta},
                  {"diverged", b.cox.fit.diverged},
                  {"iterations", b.cox.fit.iterations},
                  {"knot_times", b.cox.baseline.knot_times},
                  {"knot_values", b.cox.baseline.knot_values}};
    ordered_json maps = ordered_json::array();
    for (const IsotonicMap& map : b.isotonic.maps)
        maps.push_back({{"knot_scores", map.knot_scores},
                        {"knot_values", map.knot_values},
                        {"degenerate", map.degenerate}});
    cal["isotonic"] = {{"grid", b.isotonic.grid}, {"maps", std::move(maps)}};
    cal["censor_km"] = {{"event_times", b.censor_km.event_times},
                        {"surv_probs", b.censor_km.surv_probs},
                        {"n_at_start", b.censor_km.n_at_start}};
    j["calibration"] = std::move(cal);
    return j;
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "graft-model")
        throw SchemaError("model file: missing or wrong format tag");
    ModelBundle b;
    TrainedModel& m = b.model;
    m.config = config_from_json(j.at("config"));
    m.scaler.means = j.at("scaler").at("means").get<std::vector<double>>();
    m.scaler.stds = j.at("scaler").at("stds").get<std::vector<double>>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();

    const auto& jg = j.at("gates");
    m.gates.variant = gate_variant_from_string(jg.at("variant").get<std::string>());
    m.gates.eta = jg.at("eta").get<std::vector<double>>();
    m.gates.sigma = jg.at("sigma").get<double>();
    m.gates.lambda_l0 = jg.at("lambda_l0").get<double>();

    const auto& jn = j.at("net");
    m.net.arch_variant = arch_variant_from_string(jn.at("arch_variant").get<std::string>());
    m.net.d_h = jn.at("d_h").get<std::size_t>();
    m.net.dropout_rate = jn.at("dropout_rate").get<double>();
    m.net.beta = jn.at("beta").get<std::vector<double>>();
    m.net.mu = jn.at("mu").get<double>();
    const std::size_t p = m.net.beta.size();
    m.net.W1 = Matrix(m.net.d_h, p);
    m.net.W1.data = jn.at("W1").get<std::vector<double>>();
    m.net.b1 = jn.at("b1").get<std::vector<double>>();
    m.net.W2 = Matrix(p, m.net.d_h);
    m.net.W2.data = jn.at("W2").get<std::vector<double>>();
    m.net.b2 = jn.at("b2").get<std::vector<double>>();
    if (m.net.W1.data.size() != m.net.d_h * p || m.net.W2.data.size() != p * m.net.d_h ||
        m.net.b1.size() != m.net.d_h || m.net.b2.size() != p)
        throw SchemaError("model file: weight shapes inconsistent");

    const auto& jm = j.at("meta");
    m.epochs_run = jm.at("epochs_run").get<std::size_t>();
    m.best_epoch = jm.at("best_epoch").get<std::size_t>();
    m.best_val_loss = jm.at("best_val_loss").get<double>();

    const auto& jc = j.at("calibration");
    b.cox.fit.beta = jc.at("cox").at("beta").get<double>();
    b.cox.fit.diverged = jc.at("cox").at("diverged").get<bool>();
    b.cox.fit.iterations = jc.at("cox").at("iterations").get<int>();
    b.cox.baseline.knot_times = jc.at("cox").at("knot_times").get<std::vector<double>>();
    b.cox.baseline.knot_values = jc.at("cox").at("knot_values").get<std::vector<double>>();
    b.isotonic.grid = jc.at("isotonic").at("grid").get<std::vector<double>>();
    for (const auto& jmap : jc.at("isotonic").at("maps")) {
        IsotonicMap map;
        map.knot_scores = jmap.at("knot_scores").get<std::vector<double>>();
        map.knot_values = jmap.at("knot_values").get<std::vector<double>>();
        map.degenerate = jmap.at("degenerate").get<bool>();
        b.isotonic.maps.push_back(std::move(map));
    }
    b.censor_km.event_times = jc.at("censor_km").at("event_times").get<std::vector<double>>();
    b.censor_km.surv_probs = jc.at("censor_km").at("surv_probs").get<std::vector<double>>();
    b.censor_km.n_at_start = jc.at("censor_km").at("n_at_start").get<std::size_t>();
    return b;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << content;
    if (!out) throw ValidationError("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_model_bundle(const ModelBundle& b, const std::string& path) {
    write_text_file(path, bundle_to_json(b).dump(2) + "\n");
}

inline ModelBundle load_model_bundle(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
    try {
        return bundle_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model file: ") + e.what());
    }
}

// Fits the calibration stages and the censoring curve on the training data
// the model was trained on, packaging them with the model for evaluation.
inline ModelBundle make_bundle(TrainedModel model, const SurvivalDataset& train_raw) {
    ModelBundle b;
    const std::vector<double> scores = predict_scores(model, train_raw.features);
    b.cox = fit_cox_calibrator(scores, train_raw.times, train_raw.events);
    b.isotonic = fit_isotonic(scores, train_raw.times, train_raw.events);
    b.censor_km = fit_censoring_km(train_raw.times, train_raw.events);
    b.model = std::move(model);
    return b;
}

}  // namespace graft
