#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "evplan/ingest.hpp"
#include "evplan/matrix.hpp"

namespace evplan::bayes {

struct Prior {
    double alpha_sd = 10.0;   // intercept scale
    double beta_sd = 1.0;     // coefficient scale
    double sigma_shape = 2.0; // inverse-gamma on sigma^2
    double sigma_scale = 1.0;
};

struct RegressionSpec {
    std::vector<std::string> features;
    Prior prior;
    std::size_t n_draws = 2000;
    std::string name() const;  // comma-joined feature list
};

struct ParameterSummary {
    std::string name;
    double mean = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
};

struct PosteriorDraws {
    std::vector<std::string> parameter_names;  // alpha, beta_<f>..., sigma
    Matrix draws;                              // n_draws x (1 + |F| + 1)
    std::vector<ParameterSummary> summary;
};

// Exact conjugate Normal-Inverse-Gamma posterior for the linear-Gaussian
// consumption model, sampled n_draws times. Deterministic given the seed.
PosteriorDraws fit_posterior(const ingest::FeatureTable& table, const RegressionSpec& spec,
                             std::uint64_t seed);

// Per-parameter arithmetic mean; keys are "alpha", feature names, "sigma".
std::map<std::string, double> posterior_mean(const PosteriorDraws& draws);

struct LooResult {
    double elpd = 0.0;
    double se = 0.0;
    std::vector<double> pointwise;
};

// Exact leave-one-out: each point's log predictive density comes from the
// closed-form Student-t predictive of a refit without that point.
LooResult loo_elpd(const ingest::FeatureTable& table, const RegressionSpec& spec);

struct ComparisonEntry {
    RegressionSpec spec;
    double elpd = 0.0;
    double se = 0.0;
    std::size_t rank = 0;  // 1-based, descending elpd
};

struct ModelComparison {
    std::vector<ComparisonEntry> ranked;
};

ModelComparison compare_models(const ingest::FeatureTable& table,
                               const std::vector<RegressionSpec>& specs);

}  // namespace evplan::bayes
