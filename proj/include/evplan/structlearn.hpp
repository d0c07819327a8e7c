#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "evplan/matrix.hpp"

namespace evplan::structlearn {

struct WeightedAdjacency {
    std::vector<std::string> labels;
    Matrix weights;  // d x d, zero diagonal

    std::size_t dim() const { return labels.size(); }
    void validate() const;  // zero diagonal, unique labels, square
};

struct LearnConfig {
    double lambda1 = 0.1;
    double threshold_omega = 0.3;
    struct {
        double rho_init = 1.0;
        double rho_mult = 10.0;
        double rho_max = 1e16;
        double h_tol = 1e-8;
        int max_dual_iter = 100;
    } notears;
    struct {
        std::vector<double> s_schedule = {1.0, 0.9, 0.8, 0.7};
        std::vector<double> mu_schedule = {1.0, 0.1, 0.01, 0.001};
    } dagma;
    struct {
        int max_iter = 5000;
        double grad_tol = 1e-7;
    } inner;
    std::uint64_t seed = 0;

    void validate() const;
};

// Trace-exponential acyclicity function: h = trace(e^{W o W}) - d,
// grad = (e^{W o W})^T o 2W.
struct HValue {
    double h = 0.0;
    Matrix grad;
};
HValue notears_h(const Matrix& w);

// Log-determinant acyclicity function on the M-matrix domain
// {W : s > spectral_radius(W o W)}. Returns nullopt on domain violation so
// the line search can backtrack.
std::optional<HValue> dagma_h(const Matrix& w, double s);
bool in_dagma_domain(const Matrix& w, double s);

// Least-squares score: F = (1/2n)||X - XW||_F^2 + lambda1 * ||W||_1.
// Returns the smooth part and its gradient -(1/n) X^T (X - XW); the L1 term
// is handled by the proximal step.
struct Score {
    double smooth = 0.0;   // (1/2n)||X - XW||_F^2
    double full = 0.0;     // smooth + lambda1 * ||W||_1
    Matrix grad;           // gradient of the smooth part
};
Score score_and_grad(const Matrix& w, const Matrix& x, double lambda1);

struct FitResult {
    WeightedAdjacency w;
    bool converged = true;
    double final_h = 0.0;
    int outer_iterations = 0;
};

FitResult fit_notears(const Matrix& x, const std::vector<std::string>& labels,
                      const LearnConfig& config);
FitResult fit_dagma(const Matrix& x, const std::vector<std::string>& labels,
                    const LearnConfig& config);

struct Edge {
    std::size_t src = 0, dst = 0;  // for skeleton edges src < dst
    double weight = 0.0;
};

enum class Interpretation { directed, skeleton };

struct EdgeSet {
    std::vector<std::string> labels;
    std::vector<Edge> edges;
    Interpretation interpretation = Interpretation::directed;
    std::vector<Edge> cycle_removals;  // pruned during acyclicity repair

    bool has_edge(std::size_t src, std::size_t dst) const;
};

// Keeps |w| > omega, then repairs any residual cycles by repeatedly dropping
// the smallest-magnitude edge on a cycle.
EdgeSet threshold_edges(const WeightedAdjacency& w, double omega);

EdgeSet to_skeleton(const EdgeSet& directed);

// Kahn topological check; usable on any directed EdgeSet.
bool is_acyclic(const EdgeSet& edges);

}  // namespace evplan::structlearn
