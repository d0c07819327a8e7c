#include "evplan/structlearn.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "evplan/kernels.hpp"

namespace evplan::structlearn {

void WeightedAdjacency::validate() const {
    if (weights.rows() != weights.cols() || weights.rows() != labels.size())
        throw std::runtime_error("adjacency: dimension does not match label count");
    for (std::size_t i = 0; i < weights.rows(); ++i)
        if (weights(i, i) != 0.0) throw std::runtime_error("adjacency: nonzero diagonal");
    std::set<std::string> seen(labels.begin(), labels.end());
    if (seen.size() != labels.size()) throw std::runtime_error("adjacency: duplicate labels");
}

void LearnConfig::validate() const {
    if (lambda1 < 0.0 || threshold_omega < 0.0)
        throw std::runtime_error("lambda1 and threshold_omega must be nonnegative");
    if (notears.rho_mult <= 1.0) throw std::runtime_error("rho_mult must exceed 1");
    if (notears.h_tol <= 0.0) throw std::runtime_error("h_tol must be positive");
    if (dagma.s_schedule.size() != dagma.mu_schedule.size())
        throw std::runtime_error("dagma schedules must have equal length");
    for (double s : dagma.s_schedule)
        if (s <= 0.0) throw std::runtime_error("dagma s values must be positive");
}

namespace {

Matrix hadamard_square(const Matrix& w) {
    Matrix a(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.size(); ++i) a.data()[i] = w.data()[i] * w.data()[i];
    return a;
}

void zero_diagonal(Matrix& w) {
    for (std::size_t i = 0; i < w.rows(); ++i) w(i, i) = 0.0;
}

double l1_norm(const Matrix& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) acc += std::fabs(w.data()[i]);
    return acc;
}

}  // namespace

HValue notears_h(const Matrix& w) {
    if (w.rows() != w.cols()) throw std::invalid_argument("notears_h: not square");
    const std::size_t d = w.rows();
    const Matrix e = matrix_exponential(hadamard_square(w));
    HValue r;
    r.h = -static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) r.h += e(i, i);
    r.grad = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) r.grad(i, j) = e(j, i) * 2.0 * w(i, j);
    return r;
}

bool in_dagma_domain(const Matrix& w, double s) {
    const Matrix a = hadamard_square(w);
    if (spectral_radius_nonneg(a) >= s) return false;
    Matrix m = Matrix::identity(w.rows());
    m *= s;
    m -= a;
    const auto lu = lu_decompose(m);
    return !lu.singular && lu.det_sign() > 0.0;
}

std::optional<HValue> dagma_h(const Matrix& w, double s) {
    if (w.rows() != w.cols()) throw std::invalid_argument("dagma_h: not square");
    if (s <= 0.0) throw std::invalid_argument("dagma_h: s must be positive");
    const std::size_t d = w.rows();
    const Matrix a = hadamard_square(w);
    if (spectral_radius_nonneg(a) >= s) return std::nullopt;
    Matrix m = Matrix::identity(d);
    m *= s;
    m -= a;
    const auto lu = lu_decompose(m);
    if (lu.singular || lu.det_sign() <= 0.0) return std::nullopt;
    HValue r;
    r.h = -lu.log_det_abs() + static_cast<double>(d) * std::log(s);
    const Matrix inv = lu.inverse();
    r.grad = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) r.grad(i, j) = 2.0 * inv(j, i) * w(i, j);
    return r;
}

Score score_and_grad(const Matrix& w, const Matrix& x, double lambda1) {
    if (x.cols() != w.rows() || w.rows() != w.cols())
        throw std::invalid_argument("score_and_grad: dimension mismatch");
    const double n = static_cast<double>(x.rows());
    Matrix residual = x;
    residual -= matmul(x, w);
    Score s;
    s.smooth = frobenius_sq(residual) / (2.0 * n);
    s.full = s.smooth + lambda1 * l1_norm(w);
    s.grad = matmul_at_b(x, residual);
    s.grad *= -1.0 / n;
    return s;
}

namespace {

// Least-squares score through the Gram matrix G = X^T X: all inner-loop work
// is d x d regardless of n.
struct GramScore {
    Matrix gram;
    double n = 1.0;

    void eval(const Matrix& w, double& value, Matrix& grad) const {
        Matrix eye_minus_w = Matrix::identity(w.rows());
        eye_minus_w -= w;
        const Matrix m = matmul(gram, eye_minus_w);
        value = kernels::dot(eye_minus_w.data(), m.data(), m.size()) / (2.0 * n);
        grad = m;
        grad *= -1.0 / n;
    }
};

struct SmoothEval {
    bool ok = false;
    double value = 0.0;
    Matrix grad;
};

// Proximal gradient with backtracking on the smooth part and a soft-threshold
// step for the L1 term. The domain check lets DAGMA reject iterates that
// leave the M-matrix region. Accepted steps never increase the objective.
struct ProxResult {
    Matrix w;
    bool ok = true;  // false when the line search stalled below the minimum step
};

ProxResult prox_gradient_minimize(Matrix w, double l1_weight,
                                  const std::function<SmoothEval(const Matrix&)>& smooth,
                                  int max_iter, double grad_tol) {
    constexpr double kMinStep = 1e-14;
    double step = 1.0;
    SmoothEval cur = smooth(w);
    if (!cur.ok) throw std::runtime_error("prox_gradient: infeasible start");
    Matrix trial(w.rows(), w.cols());
    for (int it = 0; it < max_iter; ++it) {
        bool accepted = false;
        while (step >= kMinStep) {
            for (std::size_t i = 0; i < w.size(); ++i)
                trial.data()[i] = w.data()[i] - step * cur.grad.data()[i];
            kernels::soft_threshold(trial.data(), step * l1_weight, trial.data(), trial.size());
            zero_diagonal(trial);
            SmoothEval next = smooth(trial);
            if (next.ok) {
                double lin = 0.0, quad = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    const double d = trial.data()[i] - w.data()[i];
                    lin += cur.grad.data()[i] * d;
                    quad += d * d;
                }
                if (next.value <= cur.value + lin + quad / (2.0 * step) + 1e-12) {
                    const double move = std::sqrt(quad);
                    std::swap(w, trial);
                    cur = std::move(next);
                    accepted = true;
                    step = std::min(step * 2.0, 1e4);
                    if (move < grad_tol) return {std::move(w), true};
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) return {std::move(w), false};
    }
    return {std::move(w), true};
}

}  // namespace

FitResult fit_notears(const Matrix& x, const std::vector<std::string>& labels,
                      const LearnConfig& config) {
    config.validate();
    const std::size_t d = x.cols();
    if (labels.size() != d) throw std::invalid_argument("fit_notears: label count mismatch");
    FitResult result;
    result.w.labels = labels;
    result.w.weights = Matrix(d, d);
    if (d <= 1) return result;

    GramScore score{matmul_at_b(x, x), static_cast<double>(x.rows())};
    Matrix w(d, d);
    double rho = config.notears.rho_init;
    double alpha = 0.0;
    double h = std::numeric_limits<double>::infinity();

    for (int it = 0; it < config.notears.max_dual_iter; ++it) {
        Matrix w_new = w;
        double h_new = h;
        while (true) {
            auto smooth = [&](const Matrix& m) {
                SmoothEval e;
                double ls = 0.0;
                Matrix ls_grad;
                score.eval(m, ls, ls_grad);
                const HValue hv = notears_h(m);
                e.value = ls + 0.5 * rho * hv.h * hv.h + alpha * hv.h;
                e.grad = std::move(ls_grad);
                kernels::axpy(rho * hv.h + alpha, hv.grad.data(), e.grad.data(), e.grad.size());
                e.ok = true;
                return e;
            };
            auto inner = prox_gradient_minimize(w, config.lambda1, smooth,
                                                config.inner.max_iter, config.inner.grad_tol);
            w_new = std::move(inner.w);
            h_new = notears_h(w_new).h;
            if (h_new > 0.25 * h && rho < config.notears.rho_max) rho *= config.notears.rho_mult;
            else break;
        }
        w = std::move(w_new);
        h = h_new;
        alpha += rho * h;
        ++result.outer_iterations;
        if (h <= config.notears.h_tol || rho >= config.notears.rho_max) break;
    }
    result.w.weights = std::move(w);
    zero_diagonal(result.w.weights);
    result.final_h = h;
    result.converged = h <= config.notears.h_tol;
    return result;
}

FitResult fit_dagma(const Matrix& x, const std::vector<std::string>& labels,
                    const LearnConfig& config) {
    config.validate();
    const std::size_t d = x.cols();
    if (labels.size() != d) throw std::invalid_argument("fit_dagma: label count mismatch");
    FitResult result;
    result.w.labels = labels;
    result.w.weights = Matrix(d, d);
    if (d <= 1) return result;

    GramScore score{matmul_at_b(x, x), static_cast<double>(x.rows())};
    Matrix w(d, d);  // zero start is inside every W^s
    bool all_ok = true;
    for (std::size_t stage = 0; stage < config.dagma.s_schedule.size(); ++stage) {
        const double s = config.dagma.s_schedule[stage];
        const double mu = config.dagma.mu_schedule[stage];
        auto smooth = [&](const Matrix& m) {
            SmoothEval e;
            const auto hv = dagma_h(m, s);
            if (!hv) return e;  // domain violation; line search backtracks
            double ls = 0.0;
            Matrix ls_grad;
            score.eval(m, ls, ls_grad);
            e.value = mu * ls + hv->h;
            e.grad = std::move(ls_grad);
            e.grad *= mu;
            e.grad += hv->grad;
            e.ok = true;
            return e;
        };
        if (!in_dagma_domain(w, s)) {
            // Previous stage's solution left this stage's domain; restart the
            // stage from a shrunk copy that is guaranteed inside.
            double shrink = 0.5;
            Matrix w_try = w;
            while (shrink > 1e-6) {
                w_try = w;
                w_try *= shrink;
                if (in_dagma_domain(w_try, s)) break;
                shrink *= 0.5;
            }
            w = std::move(w_try);
        }
        auto inner = prox_gradient_minimize(w, mu * config.lambda1, smooth,
                                            config.inner.max_iter, config.inner.grad_tol);
        w = std::move(inner.w);
        all_ok = all_ok && inner.ok;
        ++result.outer_iterations;
    }
    result.w.weights = std::move(w);
    zero_diagonal(result.w.weights);
    const auto hv = dagma_h(result.w.weights, config.dagma.s_schedule.back());
    result.final_h = hv ? hv->h : std::numeric_limits<double>::infinity();
    result.converged = all_ok && hv.has_value();
    return result;
}

bool EdgeSet::has_edge(std::size_t src, std::size_t dst) const {
    for (const auto& e : edges)
        if (e.src == src && e.dst == dst) return true;
    return false;
}

bool is_acyclic(const EdgeSet& es) {
    const std::size_t d = es.labels.size();
    std::vector<std::size_t> indeg(d, 0);
    std::vector<std::vector<std::size_t>> out(d);
    for (const auto& e : es.edges) {
        ++indeg[e.dst];
        out[e.src].push_back(e.dst);
    }
    std::vector<std::size_t> queue;
    for (std::size_t i = 0; i < d; ++i)
        if (indeg[i] == 0) queue.push_back(i);
    std::size_t seen = 0;
    while (!queue.empty()) {
        const std::size_t u = queue.back();
        queue.pop_back();
        ++seen;
        for (std::size_t v : out[u])
            if (--indeg[v] == 0) queue.push_back(v);
    }
    return seen == d;
}

namespace {

// One directed cycle as a list of edge indices, or empty if acyclic.
std::vector<std::size_t> find_cycle(const EdgeSet& es) {
    const std::size_t d = es.labels.size();
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(d);  // (dst, edge idx)
    for (std::size_t i = 0; i < es.edges.size(); ++i)
        out[es.edges[i].src].emplace_back(es.edges[i].dst, i);

    enum class Color { white, gray, black };
    std::vector<Color> color(d, Color::white);
    std::vector<std::size_t> parent_edge(d, SIZE_MAX);

    std::vector<std::size_t> cycle;
    std::function<bool(std::size_t)> dfs = [&](std::size_t u) {
        color[u] = Color::gray;
        for (auto [v, ei] : out[u]) {
            if (color[v] == Color::gray) {
                // Walk back from u to v collecting the cycle edges.
                cycle.push_back(ei);
                std::size_t cur = u;
                while (cur != v) {
                    const std::size_t pe = parent_edge[cur];
                    cycle.push_back(pe);
                    cur = es.edges[pe].src;
                }
                return true;
            }
            if (color[v] == Color::white) {
                parent_edge[v] = ei;
                if (dfs(v)) return true;
            }
        }
        color[u] = Color::black;
        return false;
    };
    for (std::size_t s = 0; s < d; ++s)
        if (color[s] == Color::white && dfs(s)) return cycle;
    return {};
}

}  // namespace

EdgeSet threshold_edges(const WeightedAdjacency& w, double omega) {
    if (omega < 0.0) throw std::invalid_argument("threshold_edges: omega must be nonnegative");
    EdgeSet es;
    es.labels = w.labels;
    es.interpretation = Interpretation::directed;
    for (std::size_t i = 0; i < w.weights.rows(); ++i)
        for (std::size_t j = 0; j < w.weights.cols(); ++j)
            if (i != j && std::fabs(w.weights(i, j)) > omega)
                es.edges.push_back({i, j, w.weights(i, j)});

    while (true) {
        auto cycle = find_cycle(es);
        if (cycle.empty()) break;
        std::size_t weakest = cycle.front();
        for (std::size_t ei : cycle)
            if (std::fabs(es.edges[ei].weight) < std::fabs(es.edges[weakest].weight)) weakest = ei;
        es.cycle_removals.push_back(es.edges[weakest]);
        es.edges.erase(es.edges.begin() + static_cast<std::ptrdiff_t>(weakest));
    }
    return es;
}

EdgeSet to_skeleton(const EdgeSet& directed) {
    EdgeSet es;
    es.labels = directed.labels;
    es.interpretation = Interpretation::skeleton;
    std::map<std::pair<std::size_t, std::size_t>, double> best;
    for (const auto& e : directed.edges) {
        auto key = std::minmax(e.src, e.dst);
        auto [it, inserted] = best.emplace(std::make_pair(key.first, key.second), std::fabs(e.weight));
        if (!inserted) it->second = std::max(it->second, std::fabs(e.weight));
    }
    for (const auto& [k, wgt] : best) es.edges.push_back({k.first, k.second, wgt});
    return es;
}

}  // namespace evplan::structlearn
