#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "evplan/evalsuite.hpp"
#include "evplan/structlearn.hpp"

using namespace evplan;
namespace sl = structlearn;

namespace {

Matrix random_w(std::size_t d, std::mt19937_64& rng, double scale = 0.8) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix w(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) w(i, j) = u(rng);
    return w;
}

// brute-force cycle detector on the support of W
bool support_has_cycle(const Matrix& w) {
    const std::size_t d = w.rows();
    std::vector<int> color(d, 0);
    std::function<bool(std::size_t)> visit = [&](std::size_t u) {
        color[u] = 1;
        for (std::size_t v = 0; v < d; ++v) {
            if (u == v || w(u, v) == 0.0) continue;
            if (color[v] == 1) return true;
            if (color[v] == 0 && visit(v)) return true;
        }
        color[u] = 2;
        return false;
    };
    for (std::size_t u = 0; u < d; ++u)
        if (color[u] == 0 && visit(u)) return true;
    return false;
}

std::vector<std::string> labels(std::size_t d) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < d; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

}  // namespace

TEST_CASE("notears_h closed-form values") {
    CHECK(sl::notears_h(Matrix(3, 3)).h == doctest::Approx(0.0));

    Matrix two_cycle(2, 2);
    two_cycle(0, 1) = 1.0;
    two_cycle(1, 0) = 1.0;
    CHECK(sl::notears_h(two_cycle).h ==
          doctest::Approx(2.0 * std::cosh(1.0) - 2.0).epsilon(1e-10));

    std::mt19937_64 rng(41);
    for (int t = 0; t < 20; ++t) {
        auto w = random_w(5, rng);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j <= i; ++j) w(i, j) = 0.0;  // strictly upper triangular
        CHECK(std::abs(sl::notears_h(w).h) <= 1e-12);
    }
}

TEST_CASE("dagma_h closed-form values and domain handling") {
    auto zero = sl::dagma_h(Matrix(4, 4), 0.7);
    REQUIRE(zero.has_value());
    CHECK(zero->h == doctest::Approx(0.0));

    Matrix two_cycle(2, 2);
    two_cycle(0, 1) = 1.0;
    two_cycle(1, 0) = 1.0;
    auto v = sl::dagma_h(two_cycle, 2.0);
    REQUIRE(v.has_value());
    CHECK(v->h == doctest::Approx(std::log(4.0 / 3.0)).epsilon(1e-10));

    // rho(W o W) = 1 with s = 1 violates the domain
    CHECK(!sl::in_dagma_domain(two_cycle, 1.0));
    CHECK(!sl::dagma_h(two_cycle, 1.0).has_value());

    std::mt19937_64 rng(42);
    for (int t = 0; t < 20; ++t) {
        auto w = random_w(5, rng);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = i; j < 5; ++j) w(i, j) = 0.0;  // strictly lower triangular
        auto lv = sl::dagma_h(w, 1.0);
        REQUIRE(lv.has_value());
        CHECK(std::abs(lv->h) <= 1e-12);
    }
}

TEST_CASE("acyclicity functions agree with a brute-force cycle detector") {
    std::mt19937_64 rng(43);
    std::uniform_int_distribution<std::size_t> dim(2, 6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
        const auto d = dim(rng);
        auto w = random_w(d, rng, 0.6);
        // sparsify so both classes occur
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (u(rng) < 0.6) w(i, j) = 0.0;
        const bool cyclic = support_has_cycle(w);
        const double hn = sl::notears_h(w).h;
        const double s = 2.0;
        const auto hd = sl::dagma_h(w, s);
        if (cyclic) {
            CHECK(hn > 0.0);
            if (hd) CHECK(hd->h > 0.0);
        } else {
            CHECK(hn <= 1e-10);
            REQUIRE(hd.has_value());
            CHECK(hd->h <= 1e-10);
        }
    }
}

TEST_CASE("gradients match central finite differences") {
    std::mt19937_64 rng(44);
    const double step = 1e-5;
    for (int t = 0; t < 10; ++t) {
        auto w = random_w(4, rng, 0.5);
        const auto gn = sl::notears_h(w).grad;
        const auto gd = sl::dagma_h(w, 1.5);
        REQUIRE(gd.has_value());
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                if (i == j) continue;
                auto wp = w, wm = w;
                wp(i, j) += step;
                wm(i, j) -= step;
                const double fd_n = (sl::notears_h(wp).h - sl::notears_h(wm).h) / (2 * step);
                const double fd_d = (sl::dagma_h(wp, 1.5)->h - sl::dagma_h(wm, 1.5)->h) / (2 * step);
                CHECK(gn(i, j) == doctest::Approx(fd_n).epsilon(1e-6));
                CHECK(gd->grad(i, j) == doctest::Approx(fd_d).epsilon(1e-6));
            }
    }
}

TEST_CASE("score_and_grad: value at zero and finite-difference gradient") {
    std::mt19937_64 rng(45);
    std::normal_distribution<double> gauss;
    Matrix x(50, 4);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = gauss(rng);

    const auto at_zero = sl::score_and_grad(Matrix(4, 4), x, 0.1);
    CHECK(at_zero.smooth == doctest::Approx(frobenius_sq(x) / (2.0 * 50.0)).epsilon(1e-12));
    CHECK(at_zero.full == doctest::Approx(at_zero.smooth));

    const auto w = random_w(4, rng, 0.4);
    const auto sc = sl::score_and_grad(w, x, 0.1);
    const double step = 1e-5;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            auto wp = w, wm = w;
            wp(i, j) += step;
            wm(i, j) -= step;
            const double fd = (sl::score_and_grad(wp, x, 0.1).smooth -
                               sl::score_and_grad(wm, x, 0.1).smooth) /
                              (2 * step);
            CHECK(sc.grad(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
}

TEST_CASE("score_and_grad: exact linear relation leaves zero residual") {
    std::mt19937_64 rng(46);
    std::normal_distribution<double> gauss;
    Matrix x(200, 2);
    for (std::size_t i = 0; i < 200; ++i) {
        x(i, 0) = gauss(rng);
        x(i, 1) = 0.8 * x(i, 0);
    }
    Matrix w(2, 2);
    w(0, 1) = 0.8;
    const auto sc = sl::score_and_grad(w, x, 0.0);
    // only the x1 column residual remains: (1/2n)||x1||^2
    double x0_sq = 0.0;
    for (std::size_t i = 0; i < 200; ++i) x0_sq += x(i, 0) * x(i, 0);
    CHECK(sc.smooth == doctest::Approx(x0_sq / 400.0).epsilon(1e-12));
}

TEST_CASE("fit on a 2-variable SEM recovers the edge; algorithms agree") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> gauss;
    const std::size_t n = 5000;
    Matrix x(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = gauss(rng);
        x(i, 0) = x1;
        x(i, 1) = 1.5 * x1 + gauss(rng);
    }
    sl::LearnConfig config;
    const auto fn = sl::fit_notears(x, labels(2), config);
    const auto fd = sl::fit_dagma(x, labels(2), config);
    CHECK(fn.converged);
    CHECK(fn.final_h <= 1e-7);
    CHECK(fn.w.weights(0, 1) == doctest::Approx(1.5).epsilon(0.1));
    CHECK(std::abs(fn.w.weights(1, 0)) < config.threshold_omega);

    const auto en = sl::threshold_edges(fn.w, config.threshold_omega);
    const auto ed = sl::threshold_edges(fd.w, config.threshold_omega);
    REQUIRE(en.edges.size() == 1);
    REQUIRE(ed.edges.size() == 1);
    CHECK(en.edges[0].src == ed.edges[0].src);
    CHECK(en.edges[0].dst == ed.edges[0].dst);
}

TEST_CASE("d = 1 gives an empty graph immediately") {
    Matrix x(100, 1, 0.5);
    sl::LearnConfig config;
    const auto f = sl::fit_notears(x, {"only"}, config);
    CHECK(f.w.weights.rows() == 1);
    CHECK(f.final_h == 0.0);
    const auto fd = sl::fit_dagma(x, {"only"}, config);
    CHECK(fd.final_h == 0.0);
}

TEST_CASE("independent noise yields an empty thresholded graph") {
    std::mt19937_64 rng(48);
    std::normal_distribution<double> gauss;
    Matrix x(2000, 4);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = gauss(rng);
    sl::LearnConfig config;
    const auto fd = sl::fit_dagma(x, labels(4), config);
    CHECK(sl::threshold_edges(fd.w, config.threshold_omega).edges.empty());
    const auto fn = sl::fit_notears(x, labels(4), config);
    CHECK(sl::threshold_edges(fn.w, config.threshold_omega).edges.empty());
}

TEST_CASE("determinism: identical inputs give bit-identical W") {
    std::mt19937_64 rng(49);
    std::normal_distribution<double> gauss;
    Matrix x(500, 3);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = gauss(rng);
    sl::LearnConfig config;
    const auto a = sl::fit_notears(x, labels(3), config);
    const auto b = sl::fit_notears(x, labels(3), config);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(a.w.weights(i, j) == b.w.weights(i, j));
}

TEST_CASE("threshold_edges basics") {
    std::vector<std::string> l = labels(3);
    Matrix w(3, 3);
    w(0, 1) = 0.25;
    w(0, 2) = 0.9;
    w(1, 2) = -0.4;
    const auto es = sl::threshold_edges({l, w}, 0.3);
    REQUIRE(es.edges.size() == 2);
    CHECK(es.has_edge(0, 2));
    CHECK(es.has_edge(1, 2));
    CHECK(es.cycle_removals.empty());
    CHECK(sl::is_acyclic(es));

    // all below threshold -> empty
    Matrix small(3, 3);
    small(0, 1) = 0.2;
    CHECK(sl::threshold_edges({l, small}, 0.3).edges.empty());
}

TEST_CASE("cycle repair removes the smallest edge on the cycle") {
    std::vector<std::string> l = labels(3);
    Matrix w(3, 3);
    w(0, 1) = 0.9;
    w(1, 2) = 0.8;
    w(2, 0) = 0.5;  // smallest edge on the 3-cycle
    const auto es = sl::threshold_edges({l, w}, 0.3);
    CHECK(sl::is_acyclic(es));
    REQUIRE(es.cycle_removals.size() == 1);
    CHECK(es.cycle_removals[0].src == 2);
    CHECK(es.cycle_removals[0].dst == 0);
    CHECK(es.edges.size() == 2);
}

TEST_CASE("threshold output is always acyclic on random near-DAG matrices") {
    std::mt19937_64 rng(50);
    std::vector<std::string> l = labels(5);
    for (int t = 0; t < 100; ++t) {
        const auto w = random_w(5, rng, 1.0);
        const auto es = sl::threshold_edges({l, w}, 0.3);
        CHECK(sl::is_acyclic(es));
    }
}

TEST_CASE("to_skeleton symmetrizes with max-magnitude weights") {
    std::vector<std::string> l = labels(3);
    sl::EdgeSet e;
    e.labels = l;
    e.edges = {{0, 1, 0.5}, {1, 0, -0.9}, {1, 2, 0.4}};
    const auto sk = sl::to_skeleton(e);
    CHECK(sk.interpretation == sl::Interpretation::skeleton);
    REQUIRE(sk.edges.size() == 2);
    CHECK(sk.edges[0].src == 0);
    CHECK(sk.edges[0].dst == 1);
    CHECK(sk.edges[0].weight == doctest::Approx(0.9));
    CHECK(sl::to_skeleton(sl::EdgeSet{l, {}, sl::Interpretation::directed, {}}).edges.empty());
}
