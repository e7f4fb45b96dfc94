#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "graft/errors.hpp"

namespace graft {

struct SoftRankConfig {
    double tau = 0.1;                // smoothing strength; hard ranks as tau -> 0
    double variance_epsilon = 1e-8;  // guard inside the soft-rank std only
};

// Weighted least-squares projection onto the non-increasing cone
// (v1 >= v2 >= ... >= vn) by pooling adjacent violators. Pooled blocks take
// their weighted mean.
inline std::vector<double> pav_isotonic_weighted(std::span<const double> y, std::span<const double> w) {
    const std::size_t n = y.size();
    std::vector<double> block_val(n), block_w(n);
    std::vector<std::size_t> block_len(n);
    std::size_t nblocks = 0;
    for (std::size_t i = 0; i < n; ++i) {
        block_val[nblocks] = y[i];
        block_w[nblocks] = w[i];
        block_len[nblocks] = 1;
        ++nblocks;
        // merge while the new block violates non-increasing order
        while (nblocks > 1 && block_val[nblocks - 2] < block_val[nblocks - 1]) {
            const double tw = block_w[nblocks - 2] + block_w[nblocks - 1];
            block_val[nblocks - 2] =
                (block_val[nblocks - 2] * block_w[nblocks - 2] + block_val[nblocks - 1] * block_w[nblocks - 1]) / tw;
            block_w[nblocks - 2] = tw;
            block_len[nblocks - 2] += block_len[nblocks - 1];
            --nblocks;
        }
    }
    std::vector<double> out(n);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < nblocks; ++b)
        for (std::size_t k = 0; k < block_len[b]; ++k) out[pos++] = block_val[b];
    return out;
}

// Unweighted non-increasing projection; block values are block means.
inline std::vector<double> pav_isotonic(std::span<const double> y) {
    std::vector<double> w(y.size(), 1.0);
    return pav_isotonic_weighted(y, w);
}

// Squared-L2-regularized soft rank, ascending convention: larger scores get
// larger ranks, and the vector converges to hard ranks 1..m as tau -> 0.
//
// Computed as the Euclidean projection of s/tau onto the permutahedron of
// (m, m-1, ..., 1), which reduces to isotonic regression: sort s descending,
// project (sorted/tau - (m, ..., 1)) onto the non-increasing cone, subtract
// from sorted/tau and undo the permutation. The Jacobian is block-averaging
// over the pooled segments, retained here for the backward pass.
struct SoftRankResult {
    std::vector<double> ranks;
    double tau = 0.1;
    std::vector<std::size_t> sort_perm;   // position in sorted (descending) order -> original index
    std::vector<std::size_t> block_of;    // sorted position -> pooled block id
    std::vector<std::size_t> block_size;  // block id -> member count

    // Multiplies a cotangent by the (symmetric) Jacobian d(ranks)/d(s):
    //   (J v)_j = [v_j - blockmean(v over the block of j)] / tau.
    std::vector<double> apply_jacobian(std::span<const double> v) const {
        const std::size_t m = ranks.size();
        std::vector<double> block_sum(block_size.size(), 0.0);
        for (std::size_t a = 0; a < m; ++a) block_sum[block_of[a]] += v[sort_perm[a]];
        std::vector<double> out(m);
        for (std::size_t a = 0; a < m; ++a) {
            const std::size_t j = sort_perm[a];
            const double mean = block_sum[block_of[a]] / static_cast<double>(block_size[block_of[a]]);
            out[j] = (v[j] - mean) / tau;
        }
        return out;
    }
};

inline SoftRankResult soft_rank(std::span<const double> s, double tau) {
    const std::size_t m = s.size();
    if (m < 2) throw ValidationError("soft_rank: needs at least 2 elements");
    if (!(tau > 0.0)) throw ValidationError("soft_rank: tau must be > 0");

    SoftRankResult res;
    res.tau = tau;
    res.sort_perm.resize(m);
    std::iota(res.sort_perm.begin(), res.sort_perm.end(), std::size_t{0});
    std::sort(res.sort_perm.begin(), res.sort_perm.end(),
              [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });

    std::vector<double> iso_in(m);
    for (std::size_t a = 0; a < m; ++a)
        iso_in[a] = s[res.sort_perm[a]] / tau - static_cast<double>(m - a);

    // PAV with block bookkeeping for the Jacobian.
    std::vector<double> bval(m);
    std::vector<std::size_t> blen(m);
    std::size_t nblocks = 0;
    for (std::size_t i = 0; i < m; ++i) {
        bval[nblocks] = iso_in[i];
        blen[nblocks] = 1;
        ++nblocks;
        while (nblocks > 1 && bval[nblocks - 2] < bval[nblocks - 1]) {
            const double wa = static_cast<double>(blen[nblocks - 2]);
            const double wb = static_cast<double>(blen[nblocks - 1]);
            bval[nblocks - 2] = (bval[nblocks - 2] * wa + bval[nblocks - 1] * wb) / (wa + wb);
            blen[nblocks - 2] += blen[nblocks - 1];
            --nblocks;
        }
    }
    res.block_of.resize(m);
    res.block_size.assign(nblocks, 0);
    std::size_t pos = 0;
    for (std::size_t b = 0; b < nblocks; ++b) {
        res.block_size[b] = blen[b];
        for (std::size_t k = 0; k < blen[b]; ++k) res.block_of[pos++] = b;
    }

    res.ranks.resize(m);
    for (std::size_t a = 0; a < m; ++a) {
        const double fitted = bval[res.block_of[a]];
        res.ranks[res.sort_perm[a]] = s[res.sort_perm[a]] / tau - fitted;
    }
    return res;
}

// Ascending hard ranks 1..m with ties averaged over their positions.
inline std::vector<double> hard_rank(std::span<const double> y) {
    const std::size_t m = y.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
    std::vector<double> ranks(m);
    std::size_t i = 0;
    while (i < m) {
        std::size_t j = i;
        while (j + 1 < m && y[order[j + 1]] == y[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of positions i..j, 1-based
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

struct SpearmanResult {
    double loss = 0.0;
    std::vector<double> grad_scores;
};

// Negative soft Spearman correlation between scores and targets: soft ranks
// on the score side (gradient flows through them), hard tie-averaged ranks
// on the target side. Loss lives in [-1, 1]; -1 is perfect concordance.
inline SpearmanResult spearman_loss(std::span<const double> s, std::span<const double> y_star,
                                    const SoftRankConfig& cfg) {
    const std::size_t m = s.size();
    if (m < 3) throw ValidationError("spearman_loss: needs at least 3 elements");
    if (y_star.size() != m) throw ValidationError("spearman_loss: size mismatch");

    const SoftRankResult sr = soft_rank(s, cfg.tau);
    const std::vector<double> target_ranks = hard_rank(y_star);

    std::vector<double> a(m), b(m);
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mean_a += sr.ranks[i];
        mean_b += target_ranks[i];
    }
    mean_a /= static_cast<double>(m);
    mean_b /= static_cast<double>(m);
    double aa = 0.0, bb = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        a[i] = sr.ranks[i] - mean_a;
        b[i] = target_ranks[i] - mean_b;
        aa += a[i] * a[i];
        bb += b[i] * b[i];
        ab += a[i] * b[i];
    }
    if (bb <= 0.0) throw NumericError("spearman_loss: targets all equal, zero rank variance");

    const double u = std::sqrt(aa + cfg.variance_epsilon);
    const double v = std::sqrt(bb);

    SpearmanResult out;
    out.loss = -ab / (u * v);

    // d loss / d softrank_i = -(b_i/(u v) - ab * a_i / (u^3 v)); already
    // centered, so the centering projector is a no-op.
    std::vector<double> d_ranks(m);
    for (std::size_t i = 0; i < m; ++i)
        d_ranks[i] = -(b[i] / (u * v) - ab * a[i] / (u * u * u * v));
    out.grad_scores = sr.apply_jacobian(d_ranks);
    return out;
}

}  // namespace graft
