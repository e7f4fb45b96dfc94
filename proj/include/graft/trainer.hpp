#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "graft/dataset.hpp"
#include "graft/errors.hpp"
#include "graft/gates.hpp"
#include "graft/imputer.hpp"
#include "graft/matrix.hpp"
#include "graft/net.hpp"
#include "graft/rng.hpp"
#include "graft/soft_rank.hpp"

namespace graft {

enum class ModelVariant { full, no_stg, linear_only };

inline std::string to_string(ModelVariant v) {
    switch (v) {
        case ModelVariant::full: return "full";
        case ModelVariant::no_stg: return "no_stg";
        case ModelVariant::linear_only: return "linear_only";
    }
    return "full";
}

inline ModelVariant model_variant_from_string(const std::string& s) {
    if (s == "full") return ModelVariant::full;
    if (s == "no_stg") return ModelVariant::no_stg;
    if (s == "linear_only") return ModelVariant::linear_only;
    throw ConfigError("unknown model variant: " + s);
}

struct TrainConfig {
    double lr = 1e-3;
    double alpha_l2 = 1e-4;
    double lambda_l0 = 0.01;
    std::size_t batch_size = 64;
    std::size_t mc_samples = 5;  // M imputation draws per minibatch
    std::size_t max_epochs = 1000;
    std::size_t patience = 10;
    double tau = 0.1;
    double sigma = 0.5;
    std::size_t d_h = 32;
    double dropout = 0.2;
    std::uint64_t seed = 1;
    ModelVariant variant = ModelVariant::full;
    GateVariant gate_variant = GateVariant::stg;
    std::size_t k_events = 10;

    void validate() const {
        if (lr <= 0.0) throw ConfigError("lr must be > 0");
        if (alpha_l2 < 0.0) throw ConfigError("alpha_l2 must be >= 0");
        if (lambda_l0 < 0.0) throw ConfigError("lambda_l0 must be >= 0");
        if (batch_size < 3) throw ConfigError("batch_size must be >= 3");
        if (mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
        if (patience < 1 || patience > max_epochs)
            throw ConfigError("patience must be in [1, max_epochs]");
        if (tau <= 0.0) throw ConfigError("tau must be > 0");
        if (sigma <= 0.0) throw ConfigError("sigma must be > 0");
        if (d_h < 1) throw ConfigError("d_h must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
        if (k_events < 1) throw ConfigError("k_events must be >= 1");
    }
};

// Flat view over Psi = {gate params, network params}. Adam, snapshots, and
// finite-difference checks all operate on this single vector.
struct PsiLayout {
    bool has_gates = false;  // eta block present (variant = full)
    bool has_mlp = false;    // W1/b1/W2/b2 blocks present
    std::size_t p = 0, d_h = 0;

    std::size_t eta_off() const { return 0; }
    std::size_t w1_off() const { return has_gates ? p : 0; }
    std::size_t b1_off() const { return w1_off() + d_h * p; }
    std::size_t w2_off() const { return b1_off() + d_h; }
    std::size_t b2_off() const { return w2_off() + p * d_h; }
    std::size_t beta_off() const { return has_mlp ? b2_off() + p : w1_off(); }
    std::size_t mu_off() const { return beta_off() + p; }
    std::size_t size() const { return mu_off() + 1; }
};

inline PsiLayout make_layout(ModelVariant variant, std::size_t p, std::size_t d_h) {
    PsiLayout l;
    l.p = p;
    l.d_h = d_h;
    l.has_gates = variant == ModelVariant::full;
    l.has_mlp = variant != ModelVariant::linear_only;
    return l;
}

inline std::vector<double> pack_psi(const GateParams& gates, const GraftParams& net,
                                    const PsiLayout& l) {
    std::vector<double> psi(l.size());
    if (l.has_gates) std::copy(gates.eta.begin(), gates.eta.end(), psi.begin() + l.eta_off());
    if (l.has_mlp) {
        std::copy(net.W1.data.begin(), net.W1.data.end(), psi.begin() + l.w1_off());
        std::copy(net.b1.begin(), net.b1.end(), psi.begin() + l.b1_off());
        std::copy(net.W2.data.begin(), net.W2.data.end(), psi.begin() + l.w2_off());
        std::copy(net.b2.begin(), net.b2.end(), psi.begin() + l.b2_off());
    }
    std::copy(net.beta.begin(), net.beta.end(), psi.begin() + l.beta_off());
    psi[l.mu_off()] = net.mu;
    return psi;
}

inline void unpack_psi(std::span<const double> psi, const PsiLayout& l, GateParams& gates,
                       GraftParams& net) {
    if (l.has_gates)
        std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.eta_off()), l.p,
                    gates.eta.begin());
    if (l.has_mlp) {
        std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.w1_off()), l.d_h * l.p,
                    net.W1.data.begin());
        std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.b1_off()), l.d_h,
                    net.b1.begin());
        std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.w2_off()), l.p * l.d_h,
                    net.W2.data.begin());
        std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.b2_off()), l.p, net.b2.begin());
    }
    std::copy_n(psi.begin() + static_cast<std::ptrdiff_t>(l.beta_off()), l.p, net.beta.begin());
    net.mu = psi[l.mu_off()];
}

struct AdamState {
    std::vector<double> m, v;
    std::size_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Standard bias-corrected Adam update, in place.
inline void adam_step(AdamState& st, std::span<double> psi, std::span<const double> grad,
                      double lr) {
    if (psi.size() != st.m.size() || grad.size() != st.m.size())
        throw ConfigError("adam_step: size mismatch");
    st.step += 1;
    const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t i = 0; i < psi.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        const double mhat = st.m[i] / c1;
        const double vhat = st.v[i] / c2;
        psi[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

// Randomness consumed by one training minibatch, drawn up front in a fixed
// order (gates, then dropout) so reruns are reproducible.
struct GateContext {
    std::vector<double> g;     // effective gate vector applied in the forward
    std::vector<double> eps;   // stg noise; empty means deterministic gates
    std::vector<double> mask;  // reinforce Bernoulli sample; empty otherwise
    std::vector<std::uint8_t> dropout;  // hidden-layer keep flags
    bool use_dropout = false;
};

inline GateContext make_train_gate_context(const GateParams& gates, const GraftParams& net,
                                           const TrainConfig& cfg, RngStream& rng) {
    GateContext ctx;
    if (gates.variant == GateVariant::stg) {
        GateSample gs = sample_gates(gates, rng);
        ctx.g = std::move(gs.g);
        ctx.eps = std::move(gs.eps);
    } else if (gates.variant == GateVariant::reinforce) {
        ctx.mask = sample_bernoulli_mask(gates, rng);
        ctx.g = ctx.mask;
    } else {
        ctx.g = deterministic_gates(gates);  // sigmoid or none
    }
    if (net.arch_variant == ArchVariant::full && cfg.dropout > 0.0) {
        ctx.dropout = sample_dropout_mask(net.d_h, cfg.dropout, rng);
        ctx.use_dropout = true;
    }
    return ctx;
}

inline GateContext make_eval_gate_context(const GateParams& gates) {
    GateContext ctx;
    ctx.g = deterministic_gates(gates);
    return ctx;
}

struct BatchLoss {
    double total = 0.0;
    double rank = 0.0;  // mean soft-Spearman loss over the M draws
    double l0 = 0.0;
    double l2 = 0.0;
    double reward = 0.0;  // -rank, used by the reinforce baseline
    std::vector<double> grad_psi;
};

// Loss and gradient of one minibatch: mean soft-Spearman over the M target
// draws, plus the expected-open-gates penalty (stg) and the L2 term over the
// packed parameters. Reinforce gate probabilities use the score-function
// estimator and are excluded from L2.
inline BatchLoss batch_loss_and_grad(const GateParams& gates, const GraftParams& net,
                                     const TrainConfig& cfg, const Matrix& X_batch,
                                     const std::vector<std::vector<double>>& targets,
                                     const GateContext& gctx,
                                     const ReinforceBaseline& baseline) {
    const std::size_t mb = X_batch.rows, p = net.p();
    if (targets.empty()) throw ConfigError("batch_loss_and_grad: no targets");
    const PsiLayout layout = make_layout(cfg.variant, p, net.d_h);

    BatchLoss out;
    out.grad_psi.assign(layout.size(), 0.0);

    ForwardResult fwd =
        graft_forward(net, X_batch, gctx.g, gctx.use_dropout ? &gctx.dropout : nullptr);

    SoftRankConfig src;
    src.tau = cfg.tau;
    std::vector<double> dL_ds(mb, 0.0);
    const double inv_m = 1.0 / static_cast<double>(targets.size());
    for (const std::vector<double>& y : targets) {
        if (y.size() != mb) throw ConfigError("batch_loss_and_grad: target length mismatch");
        SpearmanResult sp = spearman_loss(fwd.scores, y, src);
        out.rank += inv_m * sp.loss;
        for (std::size_t i = 0; i < mb; ++i) dL_ds[i] += inv_m * sp.grad_scores[i];
    }
    out.reward = -out.rank;

    GraftGrads gg = graft_backward(net, fwd.cache, dL_ds);

    if (layout.has_gates) {
        std::span<double> grad_eta(out.grad_psi.data() + layout.eta_off(), p);
        switch (gates.variant) {
            case GateVariant::stg: {
                // empty eps means deterministic gates: same clamp subgradient at eps = 0
                std::vector<double> zeros;
                const std::vector<double>* eps = &gctx.eps;
                if (gctx.eps.empty()) {
                    zeros.assign(p, 0.0);
                    eps = &zeros;
                }
                std::vector<double> ge = gate_backward(gates, *eps, gg.dg);
                L0Penalty l0 = l0_penalty(gates);
                out.l0 = l0.value;
                for (std::size_t j = 0; j < p; ++j) grad_eta[j] = ge[j] + l0.grad_eta[j];
                break;
            }
            case GateVariant::sigmoid:
                for (std::size_t j = 0; j < p; ++j)
                    grad_eta[j] = gg.dg[j] * gctx.g[j] * (1.0 - gctx.g[j]);
                break;
            case GateVariant::reinforce: {
                if (gctx.mask.empty())
                    throw ConfigError("batch_loss_and_grad: reinforce needs a sampled mask");
                std::vector<double> asc =
                    reinforce_step(gates.eta, gctx.mask, out.reward, baseline, 0.01);
                for (std::size_t j = 0; j < p; ++j) grad_eta[j] = -asc[j];  // minimize
                break;
            }
            case GateVariant::none:
                break;
        }
    }

    if (layout.has_mlp) {
        std::copy(gg.dW1.data.begin(), gg.dW1.data.end(),
                  out.grad_psi.begin() + static_cast<std::ptrdiff_t>(layout.w1_off()));
        std::copy(gg.db1.begin(), gg.db1.end(),
                  out.grad_psi.begin() + static_cast<std::ptrdiff_t>(layout.b1_off()));
        std::copy(gg.dW2.data.begin(), gg.dW2.data.end(),
                  out.grad_psi.begin() + static_cast<std::ptrdiff_t>(layout.w2_off()));
        std::copy(gg.db2.begin(), gg.db2.end(),
                  out.grad_psi.begin() + static_cast<std::ptrdiff_t>(layout.b2_off()));
    }
    std::copy(gg.dbeta.begin(), gg.dbeta.end(),
              out.grad_psi.begin() + static_cast<std::ptrdiff_t>(layout.beta_off()));
    out.grad_psi[layout.mu_off()] = gg.dmu;

    // L2 over the packed parameters; reinforce probabilities stay out of it
    if (cfg.alpha_l2 > 0.0) {
        const std::vector<double> psi = pack_psi(gates, net, layout);
        const bool skip_eta = layout.has_gates && gates.variant == GateVariant::reinforce;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            if (skip_eta && i < p) continue;
            out.l2 += cfg.alpha_l2 * psi[i] * psi[i];
            out.grad_psi[i] += 2.0 * cfg.alpha_l2 * psi[i];
        }
    }

    out.total = out.rank + out.l0 + out.l2;
    return out;
}

struct TrainedModel {
    TrainConfig config;
    ScalerParams scaler;
    GateParams gates;
    GraftParams net;
    std::vector<std::string> feature_names;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

namespace detail {

inline Matrix gather_rows(const Matrix& X, std::span<const std::size_t> idx) {
    Matrix out(idx.size(), X.cols);
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t j = 0; j < X.cols; ++j) out(a, j) = X(idx[a], j);
    return out;
}

}  // namespace detail

// Ranking loss on a held-out set with deterministic gates, dropout off, and
// a fixed target draw; the quantity monitored for early stopping.
inline double validation_rank_loss(const GateParams& gates, const GraftParams& net,
                                   const Matrix& X_val, std::span<const double> y_val,
                                   double tau) {
    const std::vector<double> g = deterministic_gates(gates);
    ForwardResult fwd = graft_forward(net, X_val, g, nullptr);
    SoftRankConfig src;
    src.tau = tau;
    return spearman_loss(fwd.scores, y_val, src).loss;
}

// Full training run: standardize, hold out a stratified 20% validation
// split, build the imputation table once, then minibatch Adam on the
// MC-averaged soft-Spearman objective with early stopping on the validation
// ranking loss. Deterministic for a fixed (dataset, config, seed).
inline TrainedModel train(const SurvivalDataset& raw, const TrainConfig& cfg) {
    cfg.validate();
    raw.validate();
    auto [ds, scaler] = standardize(raw);
    const std::size_t n = ds.n(), p = ds.p();
    if (n < 15) throw ConfigError("train: need at least 15 subjects");

    // fold 0 of a stratified 5-fold split = 20% validation holdout
    const FoldSplit split = stratified_kfold(ds, 5, mix_seed(cfg.seed, {0x76616c2d73706cULL}));
    std::vector<std::size_t> val_idx = split.fold_indices(0);
    std::vector<std::size_t> tr_idx = split.complement_indices(0);
    if (val_idx.size() < 3 || tr_idx.size() < 3)
        throw ConfigError("train: splits too small for ranking losses");

    // imputation distributions cover the whole training split (validation
    // rows included: their fixed draw needs targets too); test data never
    // enters here
    const ImputationTable table = build_table(ds, cfg.k_events);

    RngStream rng(mix_seed(cfg.seed, {0x747261696eULL}));

    double mean_log_t = 0.0;
    for (std::size_t i : tr_idx) mean_log_t += std::log(ds.times[i]);
    mean_log_t /= static_cast<double>(tr_idx.size());

    // linear_only has no hidden layer; pin its width so neither the unused
    // W1/W2 buffers nor the RNG draws behind them depend on cfg.d_h
    const bool linear = cfg.variant == ModelVariant::linear_only;
    const ArchVariant arch = linear ? ArchVariant::no_mlp : ArchVariant::full;
    const std::size_t d_h = linear ? 1 : cfg.d_h;
    GraftParams net = init_graft_params(p, d_h, arch, mean_log_t, rng);
    net.dropout_rate = linear ? 0.0 : cfg.dropout;

    GateParams gates;
    gates.sigma = cfg.sigma;
    gates.lambda_l0 = cfg.lambda_l0;
    if (cfg.variant == ModelVariant::full) {
        gates.variant = cfg.gate_variant;
        // half-open start so no feature begins excluded: eta 0.5 (stg),
        // logits 0 (sigmoid), probabilities 0.5 (reinforce)
        gates.eta.assign(p, gates.variant == GateVariant::sigmoid ? 0.0 : 0.5);
    } else {
        gates.variant = GateVariant::none;
        gates.eta.assign(p, 1.0);
    }

    const std::vector<double> y_val = draw_targets(table, val_idx, rng);
    const Matrix X_val = detail::gather_rows(ds.features, val_idx);

    const PsiLayout layout = make_layout(cfg.variant, p, d_h);
    std::vector<double> psi = pack_psi(gates, net, layout);
    AdamState adam(psi.size());
    ReinforceBaseline baseline;

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_psi = psi;
    std::size_t best_epoch = 0, since_improve = 0, epochs_run = 0;

    std::vector<std::size_t> batch;
    std::vector<std::vector<double>> targets(cfg.mc_samples);
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        epochs_run = epoch;
        rng.shuffle(tr_idx);
        for (std::size_t start = 0; start < tr_idx.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, tr_idx.size());
            if (stop - start < 3) continue;  // soft-Spearman needs >= 3 rows
            batch.assign(tr_idx.begin() + static_cast<std::ptrdiff_t>(start),
                         tr_idx.begin() + static_cast<std::ptrdiff_t>(stop));
            const Matrix X_batch = detail::gather_rows(ds.features, batch);
            const GateContext gctx = make_train_gate_context(gates, net, cfg, rng);
            for (std::size_t k = 0; k < cfg.mc_samples; ++k)
                targets[k] = draw_targets(table, batch, rng);
            BatchLoss bl = batch_loss_and_grad(gates, net, cfg, X_batch, targets, gctx, baseline);
            adam_step(adam, psi, bl.grad_psi, cfg.lr);
            unpack_psi(psi, layout, gates, net);
            if (gates.variant == GateVariant::reinforce) {
                for (double& e : gates.eta) e = std::clamp(e, 0.01, 0.99);
                psi = pack_psi(gates, net, layout);  // keep psi consistent after the clamp
                baseline.update(bl.reward);
            }
        }
        const double vloss = validation_rank_loss(gates, net, X_val, y_val, cfg.tau);
        if (vloss < best_val) {
            best_val = vloss;
            best_epoch = epoch;
            best_psi = psi;
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            break;
        }
    }

    unpack_psi(best_psi, layout, gates, net);
    TrainedModel model;
    model.config = cfg;
    model.scaler = scaler;
    model.gates = gates;
    model.net = net;
    model.feature_names = ds.feature_names;
    model.epochs_run = epochs_run;
    model.best_epoch = best_epoch;
    model.best_val_loss = best_val;
    return model;
}

// Inference: stored scaler, deterministic gates, dropout off.
inline std::vector<double> predict_scores(const TrainedModel& model, const Matrix& X_raw) {
    if (X_raw.cols != model.net.p())
        throw ValidationError("predict_scores: feature count mismatch");
    const Matrix X = apply_scaler(X_raw, model.scaler);
    const std::vector<double> g = deterministic_gates(model.gates);
    return graft_forward(model.net, X, g, nullptr).scores;
}

inline std::vector<double> predict_scores(const TrainedModel& model, const SurvivalDataset& ds) {
    return predict_scores(model, ds.features);
}

}  // namespace graft
