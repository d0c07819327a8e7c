#include <doctest.h>

#include <cmath>
#include <random>

#include "evplan/bayes.hpp"

using namespace evplan;

namespace {

ingest::FeatureTable make_table(const Matrix& x_features, const std::vector<double>& y,
                                std::vector<std::string> feature_names) {
    ingest::FeatureTable t;
    t.columns = std::move(feature_names);
    t.columns.push_back("consumption_level");
    t.values = Matrix(x_features.rows(), x_features.cols() + 1);
    for (std::size_t i = 0; i < x_features.rows(); ++i) {
        t.row_labels.push_back("r" + std::to_string(i));
        for (std::size_t j = 0; j < x_features.cols(); ++j) t.values(i, j) = x_features(i, j);
        t.values(i, x_features.cols()) = y[i];
    }
    return t;
}

// Exact least-squares oracle via normal equations.
std::vector<double> ols(const Matrix& x_features, const std::vector<double>& y) {
    const std::size_t n = x_features.rows(), p = x_features.cols() + 1;
    Matrix design(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (std::size_t j = 0; j < x_features.cols(); ++j) design(i, j + 1) = x_features(i, j);
    }
    const auto gram = matmul_at_b(design, design);
    std::vector<double> xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) xty[j] += design(i, j) * y[i];
    return lu_decompose(gram).solve(xty);
}

}  // namespace

TEST_CASE("fit_posterior: draw count and determinism") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> gauss;
    Matrix f(60, 2);
    std::vector<double> y(60);
    for (std::size_t i = 0; i < 60; ++i) {
        f(i, 0) = gauss(rng);
        f(i, 1) = gauss(rng);
        y[i] = 1.0 + 2.0 * f(i, 0) + 0.5 * gauss(rng);
    }
    const auto table = make_table(f, y, {"f1", "f2"});
    bayes::RegressionSpec spec;
    spec.features = {"f1", "f2"};
    const auto draws = bayes::fit_posterior(table, spec, 42);
    CHECK(draws.draws.rows() == 2000);  // the documented draw count
    CHECK(draws.draws.cols() == 4);     // alpha, f1, f2, sigma
    REQUIRE(draws.parameter_names.size() == 4);
    CHECK(draws.parameter_names[0] == "alpha");
    CHECK(draws.parameter_names[3] == "sigma");
    for (std::size_t s = 0; s < draws.draws.rows(); ++s) CHECK(draws.draws(s, 3) > 0.0);

    const auto again = bayes::fit_posterior(table, spec, 42);
    for (std::size_t s = 0; s < 2000; ++s)
        for (std::size_t j = 0; j < 4; ++j) CHECK(again.draws(s, j) == draws.draws(s, j));
    const auto other = bayes::fit_posterior(table, spec, 43);
    CHECK(other.draws(0, 0) != draws.draws(0, 0));
}

TEST_CASE("posterior mean approaches OLS for y = 2 f1 + noise") {
    std::mt19937_64 rng(72);
    std::normal_distribution<double> gauss;
    Matrix f(500, 1);
    std::vector<double> y(500);
    for (std::size_t i = 0; i < 500; ++i) {
        f(i, 0) = gauss(rng);
        y[i] = 2.0 * f(i, 0) + 0.1 * gauss(rng);
    }
    const auto table = make_table(f, y, {"f1"});
    bayes::RegressionSpec spec;
    spec.features = {"f1"};
    const auto draws = bayes::fit_posterior(table, spec, 1);
    const auto means = bayes::posterior_mean(draws);
    CHECK(means.at("f1") == doctest::Approx(2.0).epsilon(0.025));
    CHECK(std::abs(means.at("alpha")) < 0.05);
}

TEST_CASE("posterior mean matches least squares under near-flat priors") {
    std::mt19937_64 rng(73);
    std::normal_distribution<double> gauss;
    Matrix f(200, 2);
    std::vector<double> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
        f(i, 0) = gauss(rng);
        f(i, 1) = gauss(rng);
        y[i] = 0.7 - 1.2 * f(i, 0) + 0.4 * f(i, 1) + 0.3 * gauss(rng);
    }
    const auto table = make_table(f, y, {"a", "b"});
    bayes::RegressionSpec spec;
    spec.features = {"a", "b"};
    spec.prior.alpha_sd = 1e6;
    spec.prior.beta_sd = 1e6;
    const auto draws = bayes::fit_posterior(table, spec, 2);
    const auto means = bayes::posterior_mean(draws);
    const auto beta = ols(f, y);
    CHECK(means.at("alpha") == doctest::Approx(beta[0]).epsilon(1e-3).scale(1.0));
    CHECK(means.at("a") == doctest::Approx(beta[1]).epsilon(1e-3).scale(1.0));
    CHECK(means.at("b") == doctest::Approx(beta[2]).epsilon(1e-3).scale(1.0));
}

TEST_CASE("y identically zero: coefficients center at zero") {
    std::mt19937_64 rng(74);
    std::normal_distribution<double> gauss;
    Matrix f(100, 1);
    for (std::size_t i = 0; i < 100; ++i) f(i, 0) = gauss(rng);
    const auto table = make_table(f, std::vector<double>(100, 0.0), {"f1"});
    bayes::RegressionSpec spec;
    spec.features = {"f1"};
    const auto means = bayes::posterior_mean(bayes::fit_posterior(table, spec, 3));
    CHECK(std::abs(means.at("alpha")) < 0.01);
    CHECK(std::abs(means.at("f1")) < 0.01);
}

TEST_CASE("rank deficiency is reported with the collinear column name") {
    std::mt19937_64 rng(75);
    std::normal_distribution<double> gauss;
    Matrix f(50, 2);
    std::vector<double> y(50);
    for (std::size_t i = 0; i < 50; ++i) {
        f(i, 0) = gauss(rng);
        f(i, 1) = 2.0 * f(i, 0);  // exact collinearity
        y[i] = gauss(rng);
    }
    const auto table = make_table(f, y, {"good", "copycat"});
    bayes::RegressionSpec spec;
    spec.features = {"good", "copycat"};
    CHECK_THROWS_WITH_AS(static_cast<void>(bayes::fit_posterior(table, spec, 1)),
                         doctest::Contains("copycat"), std::runtime_error);
}

TEST_CASE("guards: too few rows") {
    Matrix f(2, 1);
    f(0, 0) = 0.0;
    f(1, 0) = 1.0;
    const auto table = make_table(f, {0.0, 1.0}, {"f1"});
    bayes::RegressionSpec spec;
    spec.features = {"f1"};
    CHECK_THROWS(static_cast<void>(bayes::fit_posterior(table, spec, 1)));
    CHECK_THROWS(static_cast<void>(bayes::loo_elpd(table, spec)));
}

TEST_CASE("loo_elpd: duplicated rows contribute identical pointwise values") {
    std::mt19937_64 rng(76);
    std::normal_distribution<double> gauss;
    const std::size_t n = 30;
    Matrix f(2 * n, 1);
    std::vector<double> y(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        f(i, 0) = gauss(rng);
        y[i] = 1.5 * f(i, 0) + 0.4 * gauss(rng);
        f(n + i, 0) = f(i, 0);
        y[n + i] = y[i];
    }
    const auto table = make_table(f, y, {"f1"});
    bayes::RegressionSpec spec;
    spec.features = {"f1"};
    const auto loo = bayes::loo_elpd(table, spec);
    REQUIRE(loo.pointwise.size() == 2 * n);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(loo.pointwise[i] == doctest::Approx(loo.pointwise[n + i]).epsilon(1e-12));
    double total = 0.0;
    for (double v : loo.pointwise) total += v;
    CHECK(loo.elpd == doctest::Approx(total).epsilon(1e-12));
    CHECK(loo.se >= 0.0);
}

TEST_CASE("compare_models ranks by elpd with deterministic tie-breaks") {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> gauss;
    Matrix f(100, 3);
    std::vector<double> y(100);
    for (std::size_t i = 0; i < 100; ++i) {
        for (std::size_t j = 0; j < 3; ++j) f(i, j) = gauss(rng);
        y[i] = 2.0 * f(i, 0) + 0.5 * gauss(rng);  // f2, f3 are pure noise
    }
    const auto table = make_table(f, y, {"f1", "f2", "f3"});
    bayes::RegressionSpec good, noisy;
    good.features = {"f1"};
    noisy.features = {"f1", "f2", "f3"};
    const auto mc = bayes::compare_models(table, {noisy, good});
    REQUIRE(mc.ranked.size() == 2);
    CHECK(mc.ranked[0].rank == 1);
    CHECK(mc.ranked[0].elpd >= mc.ranked[1].elpd);
    // identical specs tie; the duplicate ordering is deterministic
    const auto tie = bayes::compare_models(table, {good, good});
    CHECK(tie.ranked[0].elpd == tie.ranked[1].elpd);
    CHECK(tie.ranked[0].rank == 1);
    CHECK(tie.ranked[1].rank == 2);

    CHECK_THROWS(static_cast<void>(bayes::compare_models(table, {good})));
}

TEST_CASE("parsimony: spec without the noise column wins most seeds") {
    int wins = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        std::mt19937_64 rng(900 + static_cast<std::uint64_t>(s));
        std::normal_distribution<double> gauss;
        Matrix f(200, 2);
        std::vector<double> y(200);
        for (std::size_t i = 0; i < 200; ++i) {
            f(i, 0) = gauss(rng);
            f(i, 1) = gauss(rng);
            y[i] = 1.2 * f(i, 0) + 0.5 * gauss(rng);
        }
        const auto table = make_table(f, y, {"signal", "noise"});
        bayes::RegressionSpec small, large;
        small.features = {"signal"};
        large.features = {"signal", "noise"};
        const auto small_loo = bayes::loo_elpd(table, small);
        const auto large_loo = bayes::loo_elpd(table, large);
        if (small_loo.elpd >= large_loo.elpd - 2.0 * large_loo.se) ++wins;
    }
    CHECK(wins >= 18);  // 90% of seeds
}
