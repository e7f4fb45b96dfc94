#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "graft/km.hpp"
#include "graft/rng.hpp"
#include "helpers.hpp"

using namespace graft;

TEST_CASE("fit_km matches hand product-limit computation", "[km]") {
    // times (1,2,3), events (1,0,1): drop to 2/3 at t=1, censor at 2,
    // last survivor has the event at 3 -> 0.
    const std::vector<double> t = {1, 2, 3};
    const std::vector<std::uint8_t> e = {1, 0, 1};
    const KMCurve km = fit_km(t, e);
    REQUIRE(km.event_times == std::vector<double>{1, 3});
    CHECK(km.surv_probs[0] == Catch::Approx(2.0 / 3.0));
    CHECK(km.surv_probs[1] == Catch::Approx(0.0));
    CHECK(km.n_at_start == 3);
}

TEST_CASE("fit_km degenerate and tie cases", "[km]") {
    // all censored: no drops
    const KMCurve flat = fit_km(std::vector<double>{1, 2, 3}, std::vector<std::uint8_t>{0, 0, 0});
    CHECK(flat.event_times.empty());
    CHECK(survival_at(flat, 100.0) == 1.0);

    // all events, distinct: 1 - ECDF
    const KMCurve ecdf = fit_km(std::vector<double>{1, 2, 3, 4}, std::vector<std::uint8_t>{1, 1, 1, 1});
    REQUIRE(ecdf.event_times.size() == 4);
    for (std::size_t k = 0; k < 4; ++k)
        CHECK(ecdf.surv_probs[k] == Catch::Approx(1.0 - double(k + 1) / 4.0));

    // tie at t=2: event processed before censoring -> both in the risk set
    // for the drop, both removed afterwards.
    const KMCurve tie = fit_km(std::vector<double>{1, 2, 2, 3}, std::vector<std::uint8_t>{1, 1, 0, 1});
    REQUIRE(tie.event_times == std::vector<double>{1, 2, 3});
    CHECK(tie.surv_probs[0] == Catch::Approx(0.75));
    CHECK(tie.surv_probs[1] == Catch::Approx(0.75 * (1.0 - 1.0 / 3.0)));
    CHECK(tie.surv_probs[2] == Catch::Approx(0.0));

    // double event at the same time: d=2 against the shared risk set
    const KMCurve dbl = fit_km(std::vector<double>{2, 2, 5}, std::vector<std::uint8_t>{1, 1, 0});
    REQUIRE(dbl.event_times == std::vector<double>{2});
    CHECK(dbl.surv_probs[0] == Catch::Approx(1.0 / 3.0));

    CHECK_THROWS_AS(fit_km(std::vector<double>{}, std::vector<std::uint8_t>{}), ValidationError);
}

TEST_CASE("survival_at step conventions", "[km]") {
    const KMCurve km = fit_km(std::vector<double>{1, 2, 3}, std::vector<std::uint8_t>{1, 0, 1});
    CHECK(survival_at(km, 0.5) == 1.0);                       // before first event
    CHECK(survival_at(km, 1.0) == Catch::Approx(2.0 / 3.0));  // right-continuous at the drop
    CHECK(survival_at(km, 2.5) == Catch::Approx(2.0 / 3.0));
    CHECK(survival_at(km, 3.0) == 0.0);
    CHECK(survival_at(km, 99.0) == 0.0);  // beyond last step: last value

    CHECK(survival_before(km, 1.0) == 1.0);
    CHECK(survival_before(km, 3.0) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("survival_at is non-increasing on random curves", "[km]") {
    RngStream rng(123);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> t(40);
        std::vector<std::uint8_t> e(40);
        for (std::size_t i = 0; i < t.size(); ++i) {
            t[i] = 0.1 + 5.0 * rng.uniform();
            e[i] = rng.uniform() < 0.7 ? 1 : 0;
        }
        const KMCurve km = fit_km(t, e);
        double prev = 1.0;
        for (double q = 0.0; q < 6.0; q += 0.05) {
            const double s = survival_at(km, q);
            CHECK(s <= prev + 1e-15);
            prev = s;
        }
    }
}

TEST_CASE("condition_beyond implements the truncated CDF", "[km]") {
    const KMCurve km = fit_km(std::vector<double>{1, 2, 3}, std::vector<std::uint8_t>{1, 0, 1});

    const ConditionalCDF c = condition_beyond(km, 1.5);
    REQUIRE_FALSE(c.degenerate);
    REQUIRE(c.support == std::vector<double>{3});
    CHECK(c.cdf_vals[0] == Catch::Approx(1.0));  // 1 - 0/(2/3)
    CHECK(c.total_mass == Catch::Approx(1.0));

    // t_c = 0: conditional equals unconditional 1 - S
    const ConditionalCDF u = condition_beyond(km, 0.0);
    REQUIRE(u.support == std::vector<double>{1, 3});
    CHECK(u.cdf_vals[0] == Catch::Approx(1.0 / 3.0));
    CHECK(u.cdf_vals[1] == Catch::Approx(1.0));

    CHECK(condition_beyond(km, 3.5).degenerate);  // beyond last event time

    // S(t_c) = 0 is degenerate as well
    CHECK(condition_beyond(km, 3.0).degenerate);
}

TEST_CASE("condition_beyond keeps defective mass when the tail is censored", "[km]") {
    // last observation censored: S stays at 1/3 after t=2, so conditioning at
    // t_c=0.5 has total mass 2/3 < 1.
    const KMCurve km = fit_km(std::vector<double>{1, 2, 5}, std::vector<std::uint8_t>{1, 1, 0});
    const ConditionalCDF c = condition_beyond(km, 0.5);
    REQUIRE_FALSE(c.degenerate);
    CHECK(c.total_mass == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("sample_time inverts the step CDF", "[km]") {
    ConditionalCDF c;
    c.truncation_time = 1.0;
    c.support = {2, 5};
    c.cdf_vals = {0.4, 1.0};
    c.total_mass = 1.0;

    CHECK(sample_time(c, 0.0) == 2.0);
    CHECK(sample_time(c, 0.39) == 2.0);
    CHECK(sample_time(c, 0.5) == 5.0);  // target 0.5 exceeds 0.4
    CHECK(sample_time(c, 0.999999) == 5.0);
    CHECK(sample_time(c, 0.4) == 2.0);  // boundary: smallest t with cdf >= target

    ConditionalCDF bad;
    bad.degenerate = true;
    CHECK_THROWS_AS(sample_time(bad, 0.5), NumericError);
}

TEST_CASE("sampling frequencies reproduce the conditional increments", "[km]") {
    RngStream data_rng(7);
    std::vector<double> t(60);
    std::vector<std::uint8_t> e(60);
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = 0.2 + 4.0 * data_rng.uniform();
        e[i] = data_rng.uniform() < 0.6 ? 1 : 0;
    }
    const KMCurve km = fit_km(t, e);
    const ConditionalCDF c = condition_beyond(km, 0.8);
    REQUIRE_FALSE(c.degenerate);
    REQUIRE(c.support.size() >= 3);

    const std::size_t n_draws = 100000;
    std::vector<std::size_t> counts(c.support.size(), 0);
    RngStream rng(99);
    for (std::size_t k = 0; k < n_draws; ++k) {
        const double x = sample_time(c, rng.uniform());
        const auto it = std::lower_bound(c.support.begin(), c.support.end(), x);
        REQUIRE(*it == x);
        ++counts[std::size_t(it - c.support.begin())];
    }
    for (std::size_t a = 0; a < c.support.size(); ++a) {
        const double prev = a == 0 ? 0.0 : c.cdf_vals[a - 1];
        const double prob = (c.cdf_vals[a] - prev) / c.total_mass;
        const double se = std::sqrt(prob * (1.0 - prob) / double(n_draws));
        CHECK(std::fabs(double(counts[a]) / double(n_draws) - prob) <= 3.0 * se + 1e-12);
    }
}
