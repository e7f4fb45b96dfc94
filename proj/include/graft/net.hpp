#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graft/errors.hpp"
#include "graft/matrix.hpp"
#include "graft/rng.hpp"

namespace graft {

enum class ArchVariant { full, no_mlp };

inline std::string to_string(ArchVariant v) { return v == ArchVariant::full ? "full" : "no_mlp"; }

inline ArchVariant arch_variant_from_string(const std::string& s) {
    if (s == "full") return ArchVariant::full;
    if (s == "no_mlp") return ArchVariant::no_mlp;
    throw ConfigError("unknown arch variant: " + s);
}

// Scorer parameters: gated input -> two-layer tanh residual block -> linear
// head. s = beta . (x~ + W2 tanh(W1 x~ + b1) + b2) + mu with x~ = g (.) x.
// The no_mlp variant drops the residual block entirely (phi = x~).
struct GraftParams {
    Matrix W1;  // d_h x p
    std::vector<double> b1;
    Matrix W2;  // p x d_h
    std::vector<double> b2;
    std::vector<double> beta;
    double mu = 0.0;
    std::size_t d_h = 32;
    double dropout_rate = 0.2;
    ArchVariant arch_variant = ArchVariant::full;

    std::size_t p() const { return beta.size(); }
};

inline GraftParams init_graft_params(std::size_t p, std::size_t d_h, ArchVariant variant,
                                     double mean_log_time, RngStream& rng) {
    GraftParams gp;
    gp.d_h = d_h;
    gp.arch_variant = variant;
    gp.beta.assign(p, 0.0);
    gp.mu = mean_log_time;
    gp.W1 = Matrix(d_h, p);
    gp.b1.assign(d_h, 0.0);
    gp.W2 = Matrix(p, d_h);
    gp.b2.assign(p, 0.0);
    // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); drawn even for no_mlp so the
    // RNG stream position does not depend on the variant.
    const double s1 = 1.0 / std::sqrt(static_cast<double>(p));
    for (double& w : gp.W1.data) w = s1 * (2.0 * rng.uniform() - 1.0);
    const double s2 = 1.0 / std::sqrt(static_cast<double>(d_h));
    for (double& w : gp.W2.data) w = s2 * (2.0 * rng.uniform() - 1.0);
    return gp;
}

// Keep flags for the hidden layer, 1 = keep. Kept units are scaled by
// 1/(1-rate) at train time so inference needs no rescaling.
inline std::vector<std::uint8_t> sample_dropout_mask(std::size_t d_h, double rate, RngStream& rng) {
    std::vector<std::uint8_t> mask(d_h);
    for (std::size_t j = 0; j < d_h; ++j) mask[j] = rng.uniform() >= rate ? 1 : 0;
    return mask;
}

struct ForwardCache {
    Matrix X;        // raw inputs, m x p
    std::vector<double> g;
    Matrix x_tilde;  // m x p
    Matrix h_raw;    // m x d_h, tanh(a) before dropout
    std::vector<double> drop_scale;  // per hidden unit: mask/(1-rate), or 1
    bool has_mlp = true;
    std::size_t m = 0;
};

struct ForwardResult {
    std::vector<double> scores;
    ForwardCache cache;
};

inline ForwardResult graft_forward(const GraftParams& gp, const Matrix& X,
                                   std::span<const double> g,
                                   const std::vector<std::uint8_t>* dropout_mask = nullptr) {
    const std::size_t m = X.rows, p = X.cols;
    if (p != gp.p()) throw ConfigError("graft_forward: feature count mismatch");
    if (g.size() != p) throw ConfigError("graft_forward: gate length mismatch");

    ForwardResult out;
    out.cache.X = X;
    out.cache.g.assign(g.begin(), g.end());
    out.cache.x_tilde = Matrix(m, p);
    out.cache.m = m;
    out.cache.has_mlp = gp.arch_variant == ArchVariant::full;
    out.scores.assign(m, 0.0);

    Matrix& xt = out.cache.x_tilde;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < p; ++j) xt(i, j) = g[j] * X(i, j);

    if (!out.cache.has_mlp) {
        for (std::size_t i = 0; i < m; ++i)
            out.scores[i] = dot(xt.row(i), gp.beta) + gp.mu;
        return out;
    }

    const std::size_t d_h = gp.d_h;
    if (gp.W1.rows != d_h || gp.W1.cols != p || gp.W2.rows != p || gp.W2.cols != d_h)
        throw ConfigError("graft_forward: weight shape mismatch");
    if (dropout_mask && dropout_mask->size() != d_h)
        throw ConfigError("graft_forward: dropout mask length mismatch");

    out.cache.h_raw = Matrix(m, d_h);
    out.cache.drop_scale.assign(d_h, 1.0);
    if (dropout_mask) {
        const double keep = 1.0 - gp.dropout_rate;
        for (std::size_t k = 0; k < d_h; ++k)
            out.cache.drop_scale[k] = (*dropout_mask)[k] ? 1.0 / keep : 0.0;
    }

    std::vector<double> phi(p);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t k = 0; k < d_h; ++k) {
            double a = gp.b1[k];
            for (std::size_t j = 0; j < p; ++j) a += gp.W1(k, j) * xt(i, j);
            out.cache.h_raw(i, k) = std::tanh(a);
        }
        for (std::size_t j = 0; j < p; ++j) {
            double r = gp.b2[j];
            for (std::size_t k = 0; k < d_h; ++k)
                r += gp.W2(j, k) * out.cache.h_raw(i, k) * out.cache.drop_scale[k];
            phi[j] = xt(i, j) + r;
        }
        out.scores[i] = dot(phi, gp.beta) + gp.mu;
    }
    return out;
}

struct GraftGrads {
    Matrix dW1;
    std::vector<double> db1;
    Matrix dW2;
    std::vector<double> db2;
    std::vector<double> dbeta;
    double dmu = 0.0;
    std::vector<double> dg;  // summed over the batch (shared gate vector)
};

inline GraftGrads graft_backward(const GraftParams& gp, const ForwardCache& cache,
                                 std::span<const double> dL_ds) {
    const std::size_t m = cache.m, p = gp.p(), d_h = gp.d_h;
    if (dL_ds.size() != m) throw ConfigError("graft_backward: cotangent length mismatch");

    GraftGrads gr;
    gr.dW1 = Matrix(d_h, p);
    gr.db1.assign(d_h, 0.0);
    gr.dW2 = Matrix(p, d_h);
    gr.db2.assign(p, 0.0);
    gr.dbeta.assign(p, 0.0);
    gr.dg.assign(p, 0.0);

    if (!cache.has_mlp) {
        for (std::size_t i = 0; i < m; ++i) {
            const double ds = dL_ds[i];
            gr.dmu += ds;
            for (std::size_t j = 0; j < p; ++j) {
                gr.dbeta[j] += ds * cache.x_tilde(i, j);
                // dx~_ij = ds * beta_j; dg_j accumulates dx~ * x
                gr.dg[j] += ds * gp.beta[j] * cache.X(i, j);
            }
        }
        return gr;
    }

    std::vector<double> dphi(p), da(d_h), hd(d_h);
    for (std::size_t i = 0; i < m; ++i) {
        const double ds = dL_ds[i];
        gr.dmu += ds;
        for (std::size_t k = 0; k < d_h; ++k)
            hd[k] = cache.h_raw(i, k) * cache.drop_scale[k];
        for (std::size_t j = 0; j < p; ++j) {
            double r = gp.b2[j];
            for (std::size_t k = 0; k < d_h; ++k) r += gp.W2(j, k) * hd[k];
            gr.dbeta[j] += ds * (cache.x_tilde(i, j) + r);
            dphi[j] = ds * gp.beta[j];
            gr.db2[j] += dphi[j];  // phi_j = x~_j + b2_j + ...
        }
        // residual branch: dW2, db2, dh -> da through tanh' and dropout scale
        for (std::size_t k = 0; k < d_h; ++k) {
            double dh = 0.0;
            for (std::size_t j = 0; j < p; ++j) dh += gp.W2(j, k) * dphi[j];
            dh *= cache.drop_scale[k];
            const double t = cache.h_raw(i, k);
            da[k] = dh * (1.0 - t * t);
            gr.db1[k] += da[k];
        }
        for (std::size_t j = 0; j < p; ++j) {
            for (std::size_t k = 0; k < d_h; ++k) {
                gr.dW2(j, k) += dphi[j] * hd[k];
                gr.dW1(k, j) += da[k] * cache.x_tilde(i, j);
            }
        }
        // dx~ = dphi (skip connection) + W1^T da, then dg_j += dx~ * x
        for (std::size_t j = 0; j < p; ++j) {
            double dxt = dphi[j];
            for (std::size_t k = 0; k < d_h; ++k) dxt += gp.W1(k, j) * da[k];
            gr.dg[j] += dxt * cache.X(i, j);
        }
    }
    return gr;
}

}  // namespace graft
