#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evplan/matrix.hpp"
#include "evplan/structlearn.hpp"

namespace evplan::evalsuite {

using structlearn::EdgeSet;

// Erdos-Renyi DAG over a random topological order with exactly n_edges edges.
EdgeSet random_dag(std::size_t d, std::size_t n_edges, std::uint64_t seed);

struct GroundTruthSEM {
    EdgeSet dag;                       // edge weights carried on the edges
    std::vector<double> noise_scale;   // per variable
    std::uint64_t seed = 0;

    Matrix adjacency() const;  // d x d weight matrix
};

struct SemParams {
    double weight_min = 0.5;   // magnitudes sampled from +-[min, max]
    double weight_max = 2.0;
    double noise_scale = 1.0;  // shared default; override per variable after
    // Per-variable noise is scaled by decay^depth (longest path from a root).
    // Values < 1 make downstream variables progressively better explained by
    // their parents, which keeps the SEM identifiable after standardization.
    double noise_depth_decay = 1.0;
};

GroundTruthSEM random_sem(std::size_t d, std::size_t n_edges, std::uint64_t seed,
                          const SemParams& params = {});

// Linear-Gaussian data: variables in topological order,
// x_j = sum_parents w_ij x_i + noise_scale_j * eps_j.
Matrix simulate_sem(const GroundTruthSEM& truth, std::size_t n);

struct GraphScore {
    int shd = 0;
    int reversed = 0;
    int extra = 0;
    int missing = 0;
    double f1_directed = 0.0;
    double f1_skeleton = 0.0;
};

// Flip-counts-one convention: shd = extra + missing + reversed.
GraphScore graph_score(const EdgeSet& est, const EdgeSet& truth);

struct KciConfig {
    std::size_t permutations = 1000;
    double ridge = 1e-3;
    std::uint64_t seed = 0;
};

// Kernel conditional-independence test: Gaussian kernels with the median
// heuristic on standardized inputs, kernel ridge residualization on Z, and a
// permutation null over residual indices.
double kci_test(const std::vector<double>& x, const std::vector<double>& y,
                const Matrix& z, const KciConfig& config = {});

struct CITestResult {
    std::string hypothesis;
    double p_mean = 0.0;
    double p_sd = 0.0;
    std::size_t replicates = 0;
};

// Repeats kci_test with distinct permutation seeds and reports mean/SD of the
// p-values, matching the replicate protocol used for the CI hypothesis table.
CITestResult kci_repeated(const Matrix& data, std::size_t target_col, std::size_t var_col,
                          const std::vector<std::size_t>& conditioning_cols,
                          std::size_t replicates, const KciConfig& config = {},
                          const std::string& hypothesis = "");

}  // namespace evplan::evalsuite
