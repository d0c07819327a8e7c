#include "evplan/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "evplan/kernels.hpp"

namespace evplan::bayes {

std::string RegressionSpec::name() const {
    std::string out;
    for (const auto& f : features) {
        if (!out.empty()) out += ",";
        out += f;
    }
    return out;
}

namespace {

struct Design {
    Matrix x;                 // n x p with leading intercept column
    std::vector<double> y;
    std::vector<std::string> names;  // alpha, then feature names
};

Design build_design(const ingest::FeatureTable& table, const RegressionSpec& spec) {
    if (spec.features.empty()) throw std::runtime_error("regression spec has no features");
    const std::size_t n = table.values.rows();
    Design d;
    d.x = Matrix(n, spec.features.size() + 1);
    d.names.push_back("alpha");
    for (std::size_t i = 0; i < n; ++i) d.x(i, 0) = 1.0;
    for (std::size_t j = 0; j < spec.features.size(); ++j) {
        const auto col = table.column(spec.features[j]);
        d.x.set_column(j + 1, col);
        d.names.push_back(spec.features[j]);
    }
    d.y = table.column("consumption_level");
    return d;
}

// Checks X^T X for (near-)collinearity and names the offending column.
void check_rank(const Matrix& gram, const std::vector<std::string>& names) {
    const std::size_t p = gram.rows();
    Matrix l(p, p);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = gram(i, j) - kernels::dot(l.row(i), l.row(j), j);
            if (i == j) {
                if (acc <= 1e-9 * std::max(1.0, gram(i, i)))
                    throw std::runtime_error("design is rank deficient; collinear column: " +
                                             names[i]);
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
}

struct Conjugate {
    Matrix vn;              // posterior covariance factor (times sigma^2)
    Matrix vn_chol;
    std::vector<double> mn; // posterior mean of (alpha, beta...)
    double an = 0.0, bn = 0.0;
};

std::vector<double> prior_precision_diag(const RegressionSpec& spec) {
    std::vector<double> prec(spec.features.size() + 1);
    if (spec.prior.alpha_sd <= 0.0 || spec.prior.beta_sd <= 0.0 ||
        spec.prior.sigma_shape <= 0.0 || spec.prior.sigma_scale <= 0.0)
        throw std::runtime_error("prior scales must be positive");
    prec[0] = 1.0 / (spec.prior.alpha_sd * spec.prior.alpha_sd);
    for (std::size_t j = 1; j < prec.size(); ++j)
        prec[j] = 1.0 / (spec.prior.beta_sd * spec.prior.beta_sd);
    return prec;
}

Conjugate fit_conjugate(const Matrix& gram, const std::vector<double>& xty, double yty,
                        std::size_t n, const RegressionSpec& spec) {
    const std::size_t p = gram.rows();
    Matrix precision = gram;
    const auto prior_prec = prior_precision_diag(spec);
    for (std::size_t j = 0; j < p; ++j) precision(j, j) += prior_prec[j];

    Conjugate c;
    const Matrix chol = cholesky(precision);
    c.mn = cholesky_solve(chol, xty);
    c.vn = lu_decompose(precision).inverse();
    c.vn_chol = cholesky(c.vn);
    c.an = spec.prior.sigma_shape + static_cast<double>(n) / 2.0;
    double quad = yty;
    quad -= kernels::dot(c.mn.data(), xty.data(), p);
    c.bn = spec.prior.sigma_scale + 0.5 * quad;
    if (c.bn <= 0.0) c.bn = 1e-12;  // guard against cancellation on exact fits
    return c;
}

double log_student_t_pdf(double value, double dof, double loc, double scale) {
    const double z = (value - loc) / scale;
    return std::lgamma((dof + 1.0) / 2.0) - std::lgamma(dof / 2.0) -
           0.5 * std::log(dof * std::numbers::pi) - std::log(scale) -
           (dof + 1.0) / 2.0 * std::log1p(z * z / dof);
}

}  // namespace

PosteriorDraws fit_posterior(const ingest::FeatureTable& table, const RegressionSpec& spec,
                             std::uint64_t seed) {
    const Design d = build_design(table, spec);
    const std::size_t n = d.x.rows();
    const std::size_t p = d.x.cols();
    if (n < spec.features.size() + 2)
        throw std::runtime_error("too few rows for regression: need at least |F| + 2");
    const Matrix gram = matmul_at_b(d.x, d.x);
    check_rank(gram, d.names);
    std::vector<double> xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        kernels::axpy(d.y[i], d.x.row(i), xty.data(), p);
    const double yty = kernels::sq_norm(d.y.data(), n);
    const Conjugate c = fit_conjugate(gram, xty, yty, n, spec);

    PosteriorDraws out;
    out.parameter_names = d.names;
    out.parameter_names.push_back("sigma");
    out.draws = Matrix(spec.n_draws, p + 1);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::gamma_distribution<double> gamma(c.an, 1.0 / c.bn);
    std::vector<double> z(p);
    for (std::size_t s = 0; s < spec.n_draws; ++s) {
        const double sigma_sq = 1.0 / gamma(rng);
        const double sigma = std::sqrt(sigma_sq);
        for (std::size_t j = 0; j < p; ++j) z[j] = gauss(rng);
        double* row = out.draws.row(s);
        for (std::size_t j = 0; j < p; ++j)
            row[j] = c.mn[j] + sigma * kernels::dot(c.vn_chol.row(j), z.data(), j + 1);
        row[p] = sigma;
    }

    for (std::size_t j = 0; j <= p; ++j) {
        auto col = out.draws.column(j);
        ParameterSummary ps;
        ps.name = out.parameter_names[j];
        ps.mean = kernels::sum(col.data(), col.size()) / static_cast<double>(col.size());
        std::sort(col.begin(), col.end());
        const auto quantile = [&col](double q) {
            const double idx = q * static_cast<double>(col.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(idx);
            const double f = idx - static_cast<double>(lo);
            return lo + 1 < col.size() ? col[lo] * (1.0 - f) + col[lo + 1] * f : col[lo];
        };
        ps.q05 = quantile(0.05);
        ps.q95 = quantile(0.95);
        out.summary.push_back(ps);
    }
    return out;
}

std::map<std::string, double> posterior_mean(const PosteriorDraws& draws) {
    if (draws.draws.rows() == 0) throw std::runtime_error("posterior_mean: no draws");
    std::map<std::string, double> means;
    for (std::size_t j = 0; j < draws.parameter_names.size(); ++j) {
        const auto col = draws.draws.column(j);
        means[draws.parameter_names[j]] =
            kernels::sum(col.data(), col.size()) / static_cast<double>(col.size());
    }
    return means;
}

LooResult loo_elpd(const ingest::FeatureTable& table, const RegressionSpec& spec) {
    const Design d = build_design(table, spec);
    const std::size_t n = d.x.rows();
    const std::size_t p = d.x.cols();
    if (n > 10'000) throw std::runtime_error("loo_elpd: n exceeds the exact-refit cap");
    if (n < spec.features.size() + 3)
        throw std::runtime_error("too few rows for leave-one-out: need at least |F| + 3");
    const Matrix gram_full = matmul_at_b(d.x, d.x);
    check_rank(gram_full, d.names);
    std::vector<double> xty_full(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        kernels::axpy(d.y[i], d.x.row(i), xty_full.data(), p);
    const double yty_full = kernels::sq_norm(d.y.data(), n);

    LooResult result;
    result.pointwise.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Matrix gram = gram_full;
        std::vector<double> xty = xty_full;
        const double* xi = d.x.row(i);
        for (std::size_t a = 0; a < p; ++a) {
            xty[a] -= d.y[i] * xi[a];
            for (std::size_t b = 0; b < p; ++b) gram(a, b) -= xi[a] * xi[b];
        }
        const double yty = yty_full - d.y[i] * d.y[i];
        Conjugate c;
        try {
            c = fit_conjugate(gram, xty, yty, n - 1, spec);
        } catch (const std::exception&) {
            throw std::runtime_error("loo_elpd: leave-one-out fit failed at row " +
                                     std::to_string(i));
        }
        double quad = 0.0;
        for (std::size_t a = 0; a < p; ++a)
            quad += xi[a] * kernels::dot(c.vn.row(a), xi, p);
        const double loc = kernels::dot(c.mn.data(), xi, p);
        const double dof = 2.0 * c.an;
        const double scale = std::sqrt(c.bn / c.an * (1.0 + quad));
        result.pointwise[i] = log_student_t_pdf(d.y[i], dof, loc, scale);
        result.elpd += result.pointwise[i];
    }
    const double mean = result.elpd / static_cast<double>(n);
    double var = 0.0;
    for (double v : result.pointwise) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    result.se = std::sqrt(static_cast<double>(n) * var);
    return result;
}

ModelComparison compare_models(const ingest::FeatureTable& table,
                               const std::vector<RegressionSpec>& specs) {
    if (specs.size() < 2) throw std::runtime_error("compare_models: need at least 2 specs");
    ModelComparison mc;
    for (const auto& spec : specs) {
        const auto loo = loo_elpd(table, spec);
        mc.ranked.push_back({spec, loo.elpd, loo.se, 0});
    }
    std::stable_sort(mc.ranked.begin(), mc.ranked.end(),
                     [](const ComparisonEntry& a, const ComparisonEntry& b) {
                         if (a.elpd != b.elpd) return a.elpd > b.elpd;
                         if (a.spec.features.size() != b.spec.features.size())
                             return a.spec.features.size() < b.spec.features.size();
                         return a.spec.features < b.spec.features;
                     });
    for (std::size_t i = 0; i < mc.ranked.size(); ++i) mc.ranked[i].rank = i + 1;
    return mc;
}

}  // namespace evplan::bayes
