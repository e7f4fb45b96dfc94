#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "graft/dataset.hpp"
#include "graft/gates.hpp"
#include "graft/net.hpp"
#include "graft/soft_rank.hpp"
#include "graft/trainer.hpp"
#include "helpers.hpp"

using namespace graft;

namespace {

// Generic small problem instance for loss/gradient tests. Parameters are
// perturbed away from init so no gradient is accidentally zero.
struct ToyProblem {
    GateParams gates;
    GraftParams net;
    TrainConfig cfg;
    Matrix X;
    std::vector<std::vector<double>> targets;
};

ToyProblem make_toy(std::size_t m, std::size_t p, std::size_t d_h, GateVariant gv,
                    std::uint64_t seed) {
    ToyProblem t;
    RngStream rng(seed);

    t.cfg.variant = ModelVariant::full;
    t.cfg.gate_variant = gv;
    t.cfg.tau = 0.5;
    t.cfg.alpha_l2 = 1e-4;
    t.cfg.lambda_l0 = 0.01;
    t.cfg.dropout = 0.0;
    t.cfg.d_h = d_h;

    t.net = init_graft_params(p, d_h, ArchVariant::full, 1.7, rng);
    for (double& w : t.net.W1.data) w = 0.5 * rng.normal();
    for (double& w : t.net.W2.data) w = 0.5 * rng.normal();
    for (double& b : t.net.b1) b = 0.2 * rng.normal();
    for (double& b : t.net.b2) b = 0.2 * rng.normal();
    for (double& b : t.net.beta) b = 0.4 * rng.normal();
    t.net.mu = 1.7;
    t.net.dropout_rate = 0.0;

    t.gates.variant = gv;
    t.gates.sigma = 0.5;
    t.gates.lambda_l0 = t.cfg.lambda_l0;
    t.gates.eta.resize(p);
    for (double& e : t.gates.eta)
        e = gv == GateVariant::sigmoid ? 0.6 * rng.normal() : 0.3 + 0.4 * rng.uniform();

    t.X = Matrix(m, p);
    for (double& x : t.X.data) x = rng.normal();

    t.targets.resize(2);
    for (auto& y : t.targets) {
        y.resize(m);
        for (double& v : y) v = 1.0 + 0.8 * rng.normal();
    }
    return t;
}

double fd_gap(double analytic, double fd) {
    const double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-6});
    return std::fabs(analytic - fd) / denom;
}

}  // namespace

TEST_CASE("adam takes signed unit steps first and matches the reference recurrence",
          "[trainer]") {
    SECTION("zero gradient leaves parameters untouched") {
        AdamState st(3);
        std::vector<double> psi{2.0, -0.7, 0.1};
        const std::vector<double> before = psi;
        std::vector<double> g(3, 0.0);
        adam_step(st, psi, g, 0.05);
        REQUIRE(psi == before);
        REQUIRE(st.step == 1);
    }

    SECTION("first step is -lr * sign(gradient) up to the epsilon guard") {
        AdamState st(3);
        std::vector<double> psi{2.0, -0.7, 0.1};
        const std::vector<double> before = psi;
        const std::vector<double> g{0.5, -2.0, 3.0};
        const double lr = 0.05;
        adam_step(st, psi, g, lr);
        for (std::size_t i = 0; i < 3; ++i) {
            const double want = before[i] - lr * (g[i] > 0 ? 1.0 : -1.0);
            REQUIRE(psi[i] == Catch::Approx(want).margin(lr * 1e-6));
        }
    }

    SECTION("three steps on a quadratic match a literal transcription") {
        AdamState st(1);
        std::vector<double> psi{5.0};
        const double lr = 0.1;

        double x = 5.0, m = 0.0, v = 0.0;
        for (int t = 1; t <= 3; ++t) {
            const double g = x - 3.0;  // d/dx (x-3)^2 / 2
            {
                std::vector<double> grad{psi[0] - 3.0};
                adam_step(st, psi, grad, lr);
            }
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            x -= lr * mh / (std::sqrt(vh) + 1e-8);
            REQUIRE(psi[0] == Catch::Approx(x).margin(1e-12));
        }
        REQUIRE(st.step == 3);
    }

    SECTION("size mismatch is rejected") {
        AdamState st(2);
        std::vector<double> psi{1.0, 2.0};
        std::vector<double> g{1.0};
        REQUIRE_THROWS_AS(adam_step(st, psi, g, 0.1), ConfigError);
    }
}

TEST_CASE("psi layout offsets and pack/unpack round-trip", "[trainer]") {
    const std::size_t p = 2, d_h = 3;

    SECTION("full variant offsets, computed by hand") {
        const PsiLayout l = make_layout(ModelVariant::full, p, d_h);
        REQUIRE(l.eta_off() == 0);
        REQUIRE(l.w1_off() == 2);
        REQUIRE(l.b1_off() == 8);
        REQUIRE(l.w2_off() == 11);
        REQUIRE(l.b2_off() == 17);
        REQUIRE(l.beta_off() == 19);
        REQUIRE(l.mu_off() == 21);
        REQUIRE(l.size() == 22);
    }

    SECTION("no_stg drops the gate block, linear_only keeps only beta and mu") {
        REQUIRE(make_layout(ModelVariant::no_stg, p, d_h).size() == 20);
        const PsiLayout l = make_layout(ModelVariant::linear_only, p, d_h);
        REQUIRE(l.beta_off() == 0);
        REQUIRE(l.size() == p + 1);
    }

    SECTION("pack then unpack restores every field") {
        RngStream rng(9);
        GraftParams net = init_graft_params(p, d_h, ArchVariant::full, 2.0, rng);
        for (double& b : net.b1) b = rng.normal();
        for (double& b : net.b2) b = rng.normal();
        for (double& b : net.beta) b = rng.normal();
        net.mu = -0.75;
        GateParams gates;
        gates.eta = {0.15, 0.85};

        const PsiLayout l = make_layout(ModelVariant::full, p, d_h);
        const std::vector<double> psi = pack_psi(gates, net, l);
        REQUIRE(psi[0] == 0.15);
        REQUIRE(psi[l.w1_off()] == net.W1(0, 0));
        REQUIRE(psi[l.mu_off()] == -0.75);

        GraftParams net2 = init_graft_params(p, d_h, ArchVariant::full, 0.0, rng);
        GateParams gates2;
        gates2.eta.assign(p, 0.0);
        unpack_psi(psi, l, gates2, net2);
        REQUIRE(gates2.eta == gates.eta);
        REQUIRE(net2.W1.data == net.W1.data);
        REQUIRE(net2.b1 == net.b1);
        REQUIRE(net2.W2.data == net.W2.data);
        REQUIRE(net2.b2 == net.b2);
        REQUIRE(net2.beta == net.beta);
        REQUIRE(net2.mu == net.mu);
    }
}

TEST_CASE("minibatch loss reduces to the rank loss when penalties are off", "[trainer]") {
    ToyProblem t = make_toy(5, 2, 2, GateVariant::stg, 17);
    t.cfg.alpha_l2 = 0.0;
    t.cfg.lambda_l0 = 0.0;
    t.gates.lambda_l0 = 0.0;

    GateContext ctx;
    ctx.g = deterministic_gates(t.gates);
    ReinforceBaseline baseline;

    SECTION("single target vector: total equals the spearman loss of the scores") {
        const std::vector<std::vector<double>> one{t.targets[0]};
        const BatchLoss bl =
            batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, one, ctx, baseline);
        const ForwardResult fwd = graft_forward(t.net, t.X, ctx.g, nullptr);
        SoftRankConfig src;
        src.tau = t.cfg.tau;
        const double want = spearman_loss(fwd.scores, one[0], src).loss;
        REQUIRE(bl.rank == want);
        REQUIRE(bl.total == want);
        REQUIRE(bl.l0 == 0.0);
        REQUIRE(bl.l2 == 0.0);
        REQUIRE(bl.reward == -want);
    }

    SECTION("several target vectors average their losses") {
        const BatchLoss bl =
            batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, t.targets, ctx, baseline);
        const ForwardResult fwd = graft_forward(t.net, t.X, ctx.g, nullptr);
        SoftRankConfig src;
        src.tau = t.cfg.tau;
        double want = 0.0;
        for (const auto& y : t.targets) want += spearman_loss(fwd.scores, y, src).loss;
        want /= static_cast<double>(t.targets.size());
        REQUIRE(bl.rank == Catch::Approx(want).margin(1e-14));
    }

    SECTION("empty target list is rejected") {
        const std::vector<std::vector<double>> none;
        REQUIRE_THROWS_AS(batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, none, ctx, baseline),
                          ConfigError);
    }

    SECTION("target length mismatch is rejected") {
        std::vector<std::vector<double>> bad{std::vector<double>(4, 1.0)};
        REQUIRE_THROWS_AS(batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, bad, ctx, baseline),
                          ConfigError);
    }
}

TEST_CASE("assembled minibatch gradient matches finite differences", "[trainer]") {
    // Deterministic gates (empty-eps convention) keep the loss a pure function
    // of psi; tau is wide enough that scores pool and rank gradients flow.
    auto check_variant = [](GateVariant gv, std::uint64_t seed) {
        ToyProblem t = make_toy(6, 4, 3, gv, seed);
        const PsiLayout layout = make_layout(ModelVariant::full, 4, 3);
        const std::vector<double> psi0 = pack_psi(t.gates, t.net, layout);
        ReinforceBaseline baseline;

        const auto loss_fn = [&](std::span<const double> psi) {
            GateParams g2 = t.gates;
            GraftParams n2 = t.net;
            unpack_psi(psi, layout, g2, n2);
            GateContext ctx;
            ctx.g = deterministic_gates(g2);
            return batch_loss_and_grad(g2, n2, t.cfg, t.X, t.targets, ctx, baseline).total;
        };

        GateContext ctx;
        ctx.g = deterministic_gates(t.gates);
        const BatchLoss bl =
            batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, t.targets, ctx, baseline);

        // witness that rank gradients actually reach the linear head (the FD
        // comparison would otherwise only exercise the penalty terms)
        double rank_part = 0.0;
        for (std::size_t j = 0; j < 4; ++j) {
            const double pure_l2 = 2.0 * t.cfg.alpha_l2 * psi0[layout.beta_off() + j];
            rank_part = std::max(rank_part,
                                 std::fabs(bl.grad_psi[layout.beta_off() + j] - pure_l2));
        }
        REQUIRE(rank_part > 1e-4);

        for (std::size_t j = 0; j < layout.size(); ++j) {
            const double fd = testutil::central_diff(loss_fn, psi0, j, 1e-5);
            INFO("psi slot " << j);
            REQUIRE(fd_gap(bl.grad_psi[j], fd) < 1e-4);
        }
    };

    SECTION("hard-concrete gates") { check_variant(GateVariant::stg, 2024); }
    SECTION("sigmoid gates") { check_variant(GateVariant::sigmoid, 4096); }
}

TEST_CASE("reinforce gate gradients use the score function and skip L2", "[trainer]") {
    ToyProblem t = make_toy(4, 2, 2, GateVariant::stg, 77);
    t.gates.variant = GateVariant::reinforce;
    t.cfg.gate_variant = GateVariant::reinforce;
    t.gates.eta = {0.3, 0.7};
    t.cfg.alpha_l2 = 0.0;

    GateContext ctx;
    ctx.mask = {1.0, 0.0};
    ctx.g = ctx.mask;
    ReinforceBaseline baseline;

    const PsiLayout layout = make_layout(ModelVariant::full, 2, 2);
    const BatchLoss bl = batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, t.targets, ctx, baseline);

    SECTION("eta gradient is minus the centered score-function ascent") {
        // fresh baseline: centered reward is the raw reward
        const double want0 = -(bl.reward * (1.0 / 0.3) + 0.01 * std::log(0.7 / 0.3));
        const double want1 = -(bl.reward * (-1.0 / 0.3) + 0.01 * std::log(0.3 / 0.7));
        REQUIRE(bl.grad_psi[0] == Catch::Approx(want0).margin(1e-12));
        REQUIRE(bl.grad_psi[1] == Catch::Approx(want1).margin(1e-12));
    }

    SECTION("gate probabilities stay out of the L2 term") {
        TrainConfig heavy = t.cfg;
        heavy.alpha_l2 = 10.0;
        const BatchLoss bh =
            batch_loss_and_grad(t.gates, t.net, heavy, t.X, t.targets, ctx, baseline);
        REQUIRE(bh.grad_psi[0] == bl.grad_psi[0]);
        REQUIRE(bh.grad_psi[1] == bl.grad_psi[1]);

        const std::vector<double> psi = pack_psi(t.gates, t.net, layout);
        double l2_want = 0.0;
        for (std::size_t i = 2; i < psi.size(); ++i) l2_want += 10.0 * psi[i] * psi[i];
        REQUIRE(bh.l2 == Catch::Approx(l2_want).epsilon(1e-12));
        const double mu_gap =
            bh.grad_psi[layout.mu_off()] - bl.grad_psi[layout.mu_off()];
        REQUIRE(mu_gap == Catch::Approx(20.0 * t.net.mu).margin(1e-9));
    }

    SECTION("a reinforce batch without a sampled mask is rejected") {
        GateContext det;
        det.g = {1.0, 1.0};
        REQUIRE_THROWS_AS(
            batch_loss_and_grad(t.gates, t.net, t.cfg, t.X, t.targets, det, baseline),
            ConfigError);
    }
}

TEST_CASE("training improves on the first epoch and reruns bit-identically", "[trainer]") {
    const SurvivalDataset ds = generate_synthetic(300, 5, 2, 0.3, 21).data;

    SECTION("best validation loss beats the epoch-1 snapshot") {
        TrainConfig one;
        one.seed = 21;
        one.max_epochs = 1;
        one.patience = 1;
        one.lr = 3e-3;
        one.d_h = 8;
        TrainConfig many = one;
        many.max_epochs = 60;
        many.patience = 10;
        const TrainedModel a = train(ds, one);
        const TrainedModel b = train(ds, many);
        REQUIRE(a.epochs_run == 1);
        REQUIRE(a.best_epoch == 1);
        REQUIRE(std::isfinite(a.best_val_loss));
        REQUIRE(b.best_val_loss < a.best_val_loss);
        REQUIRE(b.best_epoch >= 1);
        REQUIRE(b.epochs_run <= 60);
    }

    SECTION("same dataset, config, and seed give the same model bit for bit") {
        TrainConfig cfg;
        cfg.seed = 4;
        cfg.max_epochs = 12;
        cfg.patience = 10;
        cfg.d_h = 8;
        const TrainedModel a = train(ds, cfg);
        const TrainedModel b = train(ds, cfg);
        const PsiLayout l = make_layout(cfg.variant, ds.p(), 8);
        REQUIRE(pack_psi(a.gates, a.net, l) == pack_psi(b.gates, b.net, l));
        REQUIRE(a.epochs_run == b.epochs_run);
        REQUIRE(a.best_epoch == b.best_epoch);
        REQUIRE(a.best_val_loss == b.best_val_loss);
        REQUIRE(predict_scores(a, ds) == predict_scores(b, ds));
    }

    SECTION("patience stops long runs early") {
        TrainConfig cfg;
        cfg.seed = 9;
        cfg.max_epochs = 400;
        cfg.patience = 4;
        cfg.d_h = 8;
        const SurvivalDataset small = generate_synthetic(100, 4, 1, 0.2, 9).data;
        const TrainedModel m = train(small, cfg);
        REQUIRE(m.epochs_run < 400);
        REQUIRE(m.best_epoch <= m.epochs_run);
    }
}

TEST_CASE("training rejects undersized inputs and bad configs", "[trainer]") {
    SECTION("too few subjects") {
        const SurvivalDataset tiny = generate_synthetic(12, 2, 1, 0.0, 3).data;
        REQUIRE_THROWS_AS(train(tiny, TrainConfig{}), ConfigError);
    }

    SECTION("too few observed events for the imputation table") {
        SurvivalDataset ds = generate_synthetic(24, 2, 1, 0.0, 5).data;
        for (std::size_t i = 5; i < ds.n(); ++i) ds.events[i] = 0;  // keep 5 events
        REQUIRE_THROWS_AS(train(ds, TrainConfig{}), ConfigError);
    }

    SECTION("config invariants") {
        auto bad = [](auto&& tweak) {
            TrainConfig c;
            tweak(c);
            return c;
        };
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.batch_size = 2; }).validate(), ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.dropout = 1.0; }).validate(), ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.patience = 0; }).validate(), ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) {
                              c.max_epochs = 5;
                              c.patience = 6;
                          }).validate(),
                          ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.tau = 0.0; }).validate(), ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.mc_samples = 0; }).validate(), ConfigError);
        REQUIRE_THROWS_AS(bad([](TrainConfig& c) { c.lr = 0.0; }).validate(), ConfigError);
    }
}

TEST_CASE("signal features keep larger gates than noise features", "[trainer]") {
    const SyntheticData synth = generate_synthetic(500, 10, 3, 0.3, 11);
    TrainConfig cfg;
    cfg.seed = 11;
    cfg.max_epochs = 120;
    cfg.patience = 12;
    const TrainedModel model = train(synth.data, cfg);
    const std::vector<double> g = deterministic_gates(model.gates);

    double signal = 0.0, noise = 0.0;
    std::size_t ns = 0, nn = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        if (synth.true_beta[j] != 0.0) {
            signal += g[j];
            ++ns;
        } else {
            noise += g[j];
            ++nn;
        }
    }
    REQUIRE(ns == 3);
    REQUIRE(signal / static_cast<double>(ns) > noise / static_cast<double>(nn));
}

TEST_CASE("stronger gate penalties close more of the gates", "[trainer]") {
    const SurvivalDataset ds = generate_synthetic(250, 8, 2, 0.3, 31).data;
    auto gate_mass = [&](double lambda) {
        TrainConfig cfg;
        cfg.seed = 31;
        cfg.max_epochs = 60;
        cfg.patience = 8;
        cfg.d_h = 8;
        cfg.lambda_l0 = lambda;
        const TrainedModel m = train(ds, cfg);
        double s = 0.0;
        for (double g : deterministic_gates(m.gates)) s += g;
        return s;
    };
    REQUIRE(gate_mass(0.0) > gate_mass(0.5));
}

TEST_CASE("variant contracts hold on trained models", "[trainer]") {
    const SurvivalDataset ds = generate_synthetic(150, 5, 2, 0.25, 41).data;

    SECTION("no_stg trains with gates pinned open") {
        TrainConfig cfg;
        cfg.seed = 41;
        cfg.max_epochs = 10;
        cfg.d_h = 8;
        cfg.variant = ModelVariant::no_stg;
        const TrainedModel m = train(ds, cfg);
        REQUIRE(m.gates.variant == GateVariant::none);
        for (double g : deterministic_gates(m.gates)) REQUIRE(g == 1.0);
        REQUIRE(m.net.arch_variant == ArchVariant::full);
    }

    SECTION("linear_only ignores hidden width and dropout settings") {
        TrainConfig a;
        a.seed = 41;
        a.max_epochs = 10;
        a.variant = ModelVariant::linear_only;
        a.d_h = 32;
        a.dropout = 0.2;
        TrainConfig b = a;
        b.d_h = 5;
        b.dropout = 0.0;
        const TrainedModel ma = train(ds, a);
        const TrainedModel mb = train(ds, b);
        REQUIRE(ma.net.arch_variant == ArchVariant::no_mlp);
        REQUIRE(ma.net.beta == mb.net.beta);
        REQUIRE(ma.net.mu == mb.net.mu);
        REQUIRE(predict_scores(ma, ds) == predict_scores(mb, ds));
    }

    SECTION("linear_only scores differ by exactly beta . delta x-tilde") {
        TrainConfig cfg;
        cfg.seed = 43;
        cfg.max_epochs = 15;
        cfg.variant = ModelVariant::linear_only;
        const TrainedModel m = train(ds, cfg);

        Matrix two(2, ds.p());
        for (std::size_t j = 0; j < ds.p(); ++j) {
            two(0, j) = ds.features(0, j);
            two(1, j) = ds.features(1, j);
        }
        const std::vector<double> s = predict_scores(m, two);
        const Matrix xt = apply_scaler(two, m.scaler);
        double want = 0.0;
        for (std::size_t j = 0; j < ds.p(); ++j)
            want += m.net.beta[j] * (xt(0, j) - xt(1, j));
        REQUIRE(s[0] - s[1] == Catch::Approx(want).margin(1e-10));
    }
}

TEST_CASE("prediction equals a deterministic-gate forward pass", "[trainer]") {
    const SurvivalDataset ds = generate_synthetic(120, 4, 2, 0.2, 51).data;
    TrainConfig cfg;
    cfg.seed = 51;
    cfg.max_epochs = 8;
    cfg.patience = 4;
    cfg.d_h = 8;
    const TrainedModel m = train(ds, cfg);

    SECTION("matches the manual pipeline") {
        const Matrix X = apply_scaler(ds.features, m.scaler);
        const std::vector<double> g = deterministic_gates(m.gates);
        const std::vector<double> want = graft_forward(m.net, X, g, nullptr).scores;
        REQUIRE(predict_scores(m, ds) == want);
    }

    SECTION("duplicated rows score identically") {
        Matrix two(2, ds.p());
        for (std::size_t j = 0; j < ds.p(); ++j) two(0, j) = two(1, j) = ds.features(3, j);
        const std::vector<double> s = predict_scores(m, two);
        REQUIRE(s[0] == s[1]);
    }

    SECTION("feature count mismatch is rejected") {
        Matrix wide(2, ds.p() + 1);
        REQUIRE_THROWS_AS(predict_scores(m, wide), ValidationError);
    }
}
