#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "graft/imputer.hpp"
#include "helpers.hpp"

using namespace graft;

namespace {

SurvivalDataset one_dim(const std::vector<double>& x, const std::vector<double>& t,
                        const std::vector<std::uint8_t>& e) {
    SurvivalDataset ds;
    ds.features = Matrix(x.size(), 1);
    for (std::size_t i = 0; i < x.size(); ++i) ds.features(i, 0) = x[i];
    ds.times = t;
    ds.events = e;
    ds.feature_names = {"x"};
    return ds;
}

}  // namespace

TEST_CASE("neighborhood is the ten nearest events in one dimension", "[imputer]") {
    // censored subject at x=0; events at +-0.1, +-0.2, ..., +-1.0 with times
    // above the censoring time. The ten nearest events are +-0.1 .. +-0.5.
    std::vector<double> x = {0.0};
    std::vector<double> t = {1.0};
    std::vector<std::uint8_t> e = {0};
    for (int k = 1; k <= 10; ++k) {
        for (const double sign : {+1.0, -1.0}) {
            x.push_back(sign * 0.1 * k);
            t.push_back(2.0 + 0.01 * double(x.size()));  // distinct, all beyond t=1
            e.push_back(1);
        }
    }
    const SurvivalDataset ds = one_dim(x, t, e);
    const ImputationTable table = build_table(ds, 10);
    const ImputationEntry& entry = table.entries[0];
    REQUIRE(entry.censored);
    REQUIRE(entry.neighborhood.size() == 10);
    for (std::size_t j : entry.neighborhood) CHECK(std::fabs(x[j]) <= 0.5 + 1e-12);
    REQUIRE_FALSE(entry.cdf.degenerate);
    CHECK(entry.cdf.support.size() == 10);  // all ten neighbor events exceed t=1
}

TEST_CASE("boundary-distance ties are all included", "[imputer]") {
    // events at distances 1,2,3,...; three extra events tied at the boundary
    // distance. Expanding to 10 events lands on a tie -> all tied members in.
    std::vector<double> x = {0.0};
    std::vector<double> t = {1.0};
    std::vector<std::uint8_t> e = {0};
    for (int k = 1; k <= 9; ++k) {
        x.push_back(double(k));
        t.push_back(2.0 + 0.1 * k);
        e.push_back(1);
    }
    for (int r = 0; r < 3; ++r) {  // tied at |x| = 10
        x.push_back(r < 2 ? 10.0 : -10.0);
        t.push_back(3.0 + 0.1 * r);
        e.push_back(1);
    }
    const SurvivalDataset ds = one_dim(x, t, e);
    const ImputationTable table = build_table(ds, 10);
    CHECK(table.entries[0].neighborhood.size() == 12);  // 9 + all 3 tied
}

TEST_CASE("censored neighbors join the local fit", "[imputer]") {
    // nearest ring: 10 events plus 2 censored inside the same radius
    std::vector<double> x = {0.0};
    std::vector<double> t = {0.5};
    std::vector<std::uint8_t> e = {0};
    for (int k = 1; k <= 10; ++k) {
        x.push_back(0.1 * k);
        t.push_back(1.0 + 0.1 * k);
        e.push_back(1);
    }
    x.push_back(0.35);
    t.push_back(1.05);
    e.push_back(0);
    x.push_back(-0.15);
    t.push_back(1.15);
    e.push_back(0);
    const SurvivalDataset ds = one_dim(x, t, e);
    const ImputationTable table = build_table(ds, 10);
    // radius reaches x = 1.0 to find 10 events; censored at 0.35, -0.15 are inside
    CHECK(table.entries[0].neighborhood.size() == 12);
    std::size_t censored_members = 0;
    for (std::size_t j : table.entries[0].neighborhood) censored_members += 1 - ds.events[j];
    CHECK(censored_members == 2);
}

TEST_CASE("degenerate conditionals fall back to the censoring time", "[imputer]") {
    // the censored subject outlives every neighbor event time
    std::vector<double> x = {0.0};
    std::vector<double> t = {50.0};
    std::vector<std::uint8_t> e = {0};
    for (int k = 1; k <= 10; ++k) {
        x.push_back(0.1 * k);
        t.push_back(double(k));
        e.push_back(1);
    }
    const SurvivalDataset ds = one_dim(x, t, e);
    const ImputationTable table = build_table(ds, 10);
    const ImputationEntry& entry = table.entries[0];
    REQUIRE(entry.uses_fallback());
    CHECK(entry.fixed_log_target == Catch::Approx(std::log(50.0)));

    // fallback draws consume no randomness: the stream stays untouched
    RngStream r1(5);
    const std::vector<std::size_t> batch = {0};
    const std::vector<double> y = draw_targets(table, batch, r1);
    CHECK(y[0] == entry.fixed_log_target);
    RngStream fresh(5);
    CHECK(r1.next_u64() == fresh.next_u64());
}

TEST_CASE("uncensored targets are fixed and seed-independent", "[imputer]") {
    const SyntheticData sd = generate_synthetic(80, 3, 2, 0.3, 13);
    const auto [ds, sc] = standardize(sd.data);
    const ImputationTable table = build_table(ds, 10);

    std::vector<std::size_t> uncensored;
    for (std::size_t i = 0; i < ds.n(); ++i)
        if (ds.events[i]) uncensored.push_back(i);
    RngStream a(1), b(999);
    const std::vector<double> ya = draw_targets(table, uncensored, a);
    const std::vector<double> yb = draw_targets(table, uncensored, b);
    REQUIRE(ya == yb);
    for (std::size_t k = 0; k < uncensored.size(); ++k)
        CHECK(ya[k] == Catch::Approx(std::log(ds.times[uncensored[k]])));
}

TEST_CASE("censored draws land strictly beyond the censoring time", "[imputer]") {
    const SyntheticData sd = generate_synthetic(120, 3, 2, 0.4, 29);
    const auto [ds, sc] = standardize(sd.data);
    const ImputationTable table = build_table(ds, 10);

    RngStream rng(3);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const ImputationEntry& entry = table.entries[i];
        if (!entry.censored || entry.uses_fallback()) continue;
        const std::vector<std::size_t> batch = {i};
        for (int rep = 0; rep < 20; ++rep) {
            const double y = draw_targets(table, batch, rng)[0];
            CHECK(y > std::log(ds.times[i]));
        }
    }
}

TEST_CASE("empirical draw mean matches the conditional mean", "[imputer]") {
    std::vector<double> x = {0.0};
    std::vector<double> t = {1.0};
    std::vector<std::uint8_t> e = {0};
    for (int k = 1; k <= 12; ++k) {
        x.push_back(0.05 * k);
        t.push_back(0.5 + 0.4 * k);  // events from 0.9 to 5.3; several exceed t=1
        e.push_back(1);
    }
    const SurvivalDataset ds = one_dim(x, t, e);
    const ImputationTable table = build_table(ds, 10);
    const ImputationEntry& entry = table.entries[0];
    REQUIRE_FALSE(entry.cdf.degenerate);

    // direct mean and variance of log(T) under the step CDF
    double mean = 0.0, second = 0.0;
    for (std::size_t a = 0; a < entry.cdf.support.size(); ++a) {
        const double prev = a == 0 ? 0.0 : entry.cdf.cdf_vals[a - 1];
        const double w = (entry.cdf.cdf_vals[a] - prev) / entry.cdf.total_mass;
        const double ly = std::log(entry.cdf.support[a]);
        mean += w * ly;
        second += w * ly * ly;
    }
    const double var = second - mean * mean;

    const std::size_t n_draws = 100000;
    RngStream rng(77);
    const std::vector<std::size_t> batch = {0};
    double acc = 0.0;
    for (std::size_t k = 0; k < n_draws; ++k) acc += draw_targets(table, batch, rng)[0];
    const double emp = acc / double(n_draws);
    const double se = std::sqrt(var / double(n_draws));
    CHECK(std::fabs(emp - mean) <= 3.0 * se);
}

TEST_CASE("table construction is deterministic", "[imputer]") {
    const SyntheticData sd = generate_synthetic(90, 4, 2, 0.35, 41);
    const auto [ds, sc] = standardize(sd.data);
    const ImputationTable t1 = build_table(ds, 10);
    const ImputationTable t2 = build_table(ds, 10);
    REQUIRE(t1.n() == t2.n());
    for (std::size_t i = 0; i < t1.n(); ++i) {
        CHECK(t1.entries[i].neighborhood == t2.entries[i].neighborhood);
        CHECK(t1.entries[i].cdf.support == t2.entries[i].cdf.support);
        CHECK(t1.entries[i].cdf.cdf_vals == t2.entries[i].cdf.cdf_vals);
        CHECK(t1.entries[i].fixed_log_target == t2.entries[i].fixed_log_target);
    }
}

TEST_CASE("build_table demands enough events", "[imputer]") {
    const SurvivalDataset ds = one_dim({0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}, {1, 1, 0});
    CHECK_THROWS_AS(build_table(ds, 10), ConfigError);
}
