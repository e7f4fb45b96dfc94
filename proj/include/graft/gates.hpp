#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "graft/errors.hpp"
#include "graft/rng.hpp"

namespace graft {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

enum class GateVariant { stg, sigmoid, reinforce, none };

inline std::string to_string(GateVariant v) {
    switch (v) {
        case GateVariant::stg: return "stg";
        case GateVariant::sigmoid: return "sigmoid";
        case GateVariant::reinforce: return "reinforce";
        case GateVariant::none: return "none";
    }
    return "stg";
}

inline GateVariant gate_variant_from_string(const std::string& s) {
    if (s == "stg") return GateVariant::stg;
    if (s == "sigmoid") return GateVariant::sigmoid;
    if (s == "reinforce") return GateVariant::reinforce;
    if (s == "none") return GateVariant::none;
    throw ConfigError("unknown gate variant: " + s);
}

// Population-level feature gates. `eta` is the learnable parameter vector;
// its meaning depends on the variant: gate means for stg, logits for
// sigmoid, Bernoulli probabilities for reinforce.
struct GateParams {
    std::vector<double> eta;
    double sigma = 0.5;
    double lambda_l0 = 0.01;
    GateVariant variant = GateVariant::stg;

    std::size_t p() const { return eta.size(); }
};

struct GateSample {
    std::vector<double> g;    // gate values in [0, 1]
    std::vector<double> eps;  // the Gaussian noise, kept for the backward pass
};

// One stochastic gate vector, shared by every row of a minibatch:
// g_j = clamp(eta_j + eps_j, 0, 1) with eps ~ N(0, sigma^2).
inline GateSample sample_gates(const GateParams& gp, RngStream& rng) {
    if (gp.variant != GateVariant::stg) throw ConfigError("sample_gates: stg variant only");
    GateSample out;
    out.g.resize(gp.p());
    out.eps.resize(gp.p());
    for (std::size_t j = 0; j < gp.p(); ++j) {
        out.eps[j] = gp.sigma * rng.normal();
        out.g[j] = std::clamp(gp.eta[j] + out.eps[j], 0.0, 1.0);
    }
    return out;
}

// Inference-time gates: the noise-free expected value for stg, the squashed
// logit for sigmoid, a hard 0.5 threshold for reinforce.
inline std::vector<double> deterministic_gates(const GateParams& gp) {
    std::vector<double> g(gp.p());
    for (std::size_t j = 0; j < gp.p(); ++j) {
        switch (gp.variant) {
            case GateVariant::stg: g[j] = std::clamp(gp.eta[j], 0.0, 1.0); break;
            case GateVariant::sigmoid: g[j] = sigmoid(gp.eta[j]); break;
            case GateVariant::reinforce: g[j] = gp.eta[j] >= 0.5 ? 1.0 : 0.0; break;
            case GateVariant::none: g[j] = 1.0; break;
        }
    }
    return g;
}

struct L0Penalty {
    double value = 0.0;
    std::vector<double> grad_eta;
};

// Expected number of open gates under the Gaussian relaxation:
//   lambda * sum_j Phi(eta_j / sigma),
// with gradient lambda * phi(eta_j / sigma) / sigma.
inline L0Penalty l0_penalty(const GateParams& gp) {
    if (gp.variant != GateVariant::stg) throw ConfigError("l0_penalty: stg variant only");
    L0Penalty out;
    out.grad_eta.resize(gp.p());
    for (std::size_t j = 0; j < gp.p(); ++j) {
        out.value += gp.lambda_l0 * normal_cdf(gp.eta[j] / gp.sigma);
        out.grad_eta[j] = gp.lambda_l0 * normal_pdf(gp.eta[j] / gp.sigma) / gp.sigma;
    }
    return out;
}

// Reparameterized backward through the clamp: the gradient passes where
// eta + eps landed strictly inside (0, 1) and is zero where it saturated.
inline std::vector<double> gate_backward(const GateParams& gp, std::span<const double> eps,
                                         std::span<const double> dL_dg) {
    std::vector<double> grad(gp.p(), 0.0);
    for (std::size_t j = 0; j < gp.p(); ++j) {
        const double z = gp.eta[j] + eps[j];
        if (z > 0.0 && z < 1.0) grad[j] = dL_dg[j];
    }
    return grad;
}

// Bernoulli masks for the reinforce variant, again one vector per batch.
inline std::vector<double> sample_bernoulli_mask(const GateParams& gp, RngStream& rng) {
    if (gp.variant != GateVariant::reinforce) throw ConfigError("sample_bernoulli_mask: reinforce variant only");
    std::vector<double> mask(gp.p());
    for (std::size_t j = 0; j < gp.p(); ++j) mask[j] = rng.uniform() < gp.eta[j] ? 1.0 : 0.0;
    return mask;
}

// Exponential-moving-average reward baseline for REINFORCE, seeded with the
// first observed reward.
struct ReinforceBaseline {
    double value = 0.0;
    double decay = 0.9;
    bool initialized = false;

    void update(double reward) {
        if (!initialized) {
            value = reward;
            initialized = true;
        } else {
            value = decay * value + (1.0 - decay) * reward;
        }
    }
};

/// Score-function ascent direction for the gate probabilities:
//   (reward - baseline) * d log Bernoulli(mask; p) / dp + entropy_coef * dH/dp.
// The caller updates the baseline afterwards and negates the result when
// feeding a minimizer.
inline std::vector<double> reinforce_step(std::span<const double> probs, std::span<const double> mask,
                                          double reward, const ReinforceBaseline& baseline,
                                          double entropy_coef) {
    std::vector<double> grad(probs.size());
    const double centered = reward - (baseline.initialized ? baseline.value : 0.0);
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (!(probs[j] > 0.0 && probs[j] < 1.0))
            throw NumericError("reinforce_step: probability out of (0,1)");
        const double score = mask[j] > 0.5 ? 1.0 / probs[j] : -1.0 / (1.0 - probs[j]);
        const double entropy_grad = std::log((1.0 - probs[j]) / probs[j]);
        grad[j] = centered * score + entropy_coef * entropy_grad;
    }
    return grad;
}

}  // namespace graft
