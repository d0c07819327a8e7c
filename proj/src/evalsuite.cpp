#include "evplan/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "evplan/kernels.hpp"

namespace evplan::evalsuite {

EdgeSet random_dag(std::size_t d, std::size_t n_edges, std::uint64_t seed) {
    const std::size_t max_edges = d * (d - 1) / 2;
    if (n_edges > max_edges) throw std::invalid_argument("random_dag: too many edges requested");
    std::mt19937_64 rng(seed);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(max_edges);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) pairs.emplace_back(order[i], order[j]);
    std::shuffle(pairs.begin(), pairs.end(), rng);

    EdgeSet es;
    es.labels.resize(d);
    for (std::size_t i = 0; i < d; ++i) es.labels[i] = "x" + std::to_string(i);
    for (std::size_t e = 0; e < n_edges; ++e)
        es.edges.push_back({pairs[e].first, pairs[e].second, 1.0});
    return es;
}

Matrix GroundTruthSEM::adjacency() const {
    const std::size_t d = dag.labels.size();
    Matrix w(d, d);
    for (const auto& e : dag.edges) w(e.src, e.dst) = e.weight;
    return w;
}

GroundTruthSEM random_sem(std::size_t d, std::size_t n_edges, std::uint64_t seed,
                          const SemParams& params) {
    GroundTruthSEM sem;
    sem.seed = seed;
    sem.dag = random_dag(d, n_edges, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> mag(params.weight_min, params.weight_max);
    std::bernoulli_distribution sign(0.5);
    for (auto& e : sem.dag.edges) e.weight = (sign(rng) ? 1.0 : -1.0) * mag(rng);
    sem.noise_scale.assign(d, params.noise_scale);
    if (params.noise_depth_decay != 1.0) {
        // longest-path depth from any root, edges in arbitrary order
        std::vector<std::size_t> depth(d, 0);
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& e : sem.dag.edges)
                if (depth[e.dst] < depth[e.src] + 1) {
                    depth[e.dst] = depth[e.src] + 1;
                    changed = true;
                }
        }
        for (std::size_t j = 0; j < d; ++j)
            sem.noise_scale[j] *= std::pow(params.noise_depth_decay, static_cast<double>(depth[j]));
    }
    return sem;
}

Matrix simulate_sem(const GroundTruthSEM& truth, std::size_t n) {
    if (n < 1) throw std::invalid_argument("simulate_sem: n must be >= 1");
    const std::size_t d = truth.dag.labels.size();
    if (truth.noise_scale.size() != d)
        throw std::invalid_argument("simulate_sem: noise_scale size mismatch");
    if (!structlearn::is_acyclic(truth.dag))
        throw std::invalid_argument("simulate_sem: ground truth graph has a cycle");

    // Topological order by Kahn.
    std::vector<std::size_t> indeg(d, 0);
    std::vector<std::vector<std::pair<std::size_t, double>>> parents(d);
    for (const auto& e : truth.dag.edges) {
        ++indeg[e.dst];
        parents[e.dst].emplace_back(e.src, e.weight);
    }
    std::vector<std::size_t> order, queue;
    std::vector<std::size_t> indeg_work = indeg;
    for (std::size_t i = 0; i < d; ++i)
        if (indeg_work[i] == 0) queue.push_back(i);
    while (!queue.empty()) {
        std::size_t u = queue.back();
        queue.pop_back();
        order.push_back(u);
        for (const auto& e : truth.dag.edges)
            if (e.src == u && --indeg_work[e.dst] == 0) queue.push_back(e.dst);
    }

    std::mt19937_64 rng(truth.seed ^ 0xc2b2ae3d27d4eb4full);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double* row = x.row(i);
        for (std::size_t j : order) {
            double v = truth.noise_scale[j] > 0.0 ? truth.noise_scale[j] * gauss(rng) : 0.0;
            for (auto [p, w] : parents[j]) v += w * row[p];
            row[j] = v;
        }
    }
    return x;
}

namespace {

std::set<std::pair<std::size_t, std::size_t>> directed_set(const EdgeSet& es) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (const auto& e : es.edges) s.emplace(e.src, e.dst);
    return s;
}

std::set<std::pair<std::size_t, std::size_t>> skeleton_set(const EdgeSet& es) {
    std::set<std::pair<std::size_t, std::size_t>> s;
    for (const auto& e : es.edges) {
        auto [a, b] = std::minmax(e.src, e.dst);
        s.emplace(a, b);
    }
    return s;
}

double f1_from_sets(const std::set<std::pair<std::size_t, std::size_t>>& est,
                    const std::set<std::pair<std::size_t, std::size_t>>& truth) {
    std::size_t tp = 0;
    for (const auto& e : est)
        if (truth.count(e)) ++tp;
    const std::size_t fp = est.size() - tp;
    const std::size_t fn = truth.size() - tp;
    if (2 * tp + fp + fn == 0) return 0.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

GraphScore graph_score(const EdgeSet& est, const EdgeSet& truth) {
    if (est.labels != truth.labels)
        throw std::invalid_argument("graph_score: label sets differ");
    const auto est_dir = directed_set(est);
    const auto truth_dir = directed_set(truth);
    const auto est_skel = skeleton_set(est);
    const auto truth_skel = skeleton_set(truth);

    GraphScore s;
    for (const auto& [i, j] : truth_dir) {
        if (est_dir.count({j, i}) && !est_dir.count({i, j})) ++s.reversed;
        else if (!est_skel.count(std::minmax(i, j))) ++s.missing;
    }
    for (const auto& e : est_dir)
        if (!truth_skel.count(std::minmax(e.first, e.second))) ++s.extra;
    s.shd = s.extra + s.missing + s.reversed;
    s.f1_directed = f1_from_sets(est_dir, truth_dir);
    s.f1_skeleton = f1_from_sets(est_skel, truth_skel);
    return s;
}

namespace {

void standardize_inplace(std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = kernels::sum(v.data(), v.size()) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) throw std::runtime_error("kci_test: constant input variable");
    for (double& x : v) x = (x - mean) / sd;
}

// Gaussian kernel matrix on rows of the column-set with the median heuristic.
Matrix gaussian_kernel(const Matrix& data) {
    const std::size_t n = data.rows();
    Matrix sq(n, n);
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        sq(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = kernels::sq_dist(data.row(i), data.row(j), data.cols());
            sq(i, j) = d2;
            sq(j, i) = d2;
            dists.push_back(d2);
        }
    }
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    double med_sq = dists[dists.size() / 2];
    if (med_sq <= 0.0) med_sq = 1.0;
    const double gamma = 1.0 / (2.0 * med_sq);
    Matrix k(n, n);
    for (std::size_t i = 0; i < n * n; ++i) k.data()[i] = std::exp(-gamma * sq.data()[i]);
    return k;
}

void center_inplace(Matrix& k) {
    const std::size_t n = k.rows();
    std::vector<double> row_mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row_mean[i] = kernels::sum(k.row(i), n) / static_cast<double>(n);
        total += row_mean[i];
    }
    total /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) k(i, j) += total - row_mean[i] - row_mean[j];
}

}  // namespace

double kci_test(const std::vector<double>& x, const std::vector<double>& y, const Matrix& z,
                const KciConfig& config) {
    const std::size_t n = x.size();
    if (y.size() != n || (z.cols() > 0 && z.rows() != n))
        throw std::invalid_argument("kci_test: length mismatch");
    if (n < 10) throw std::invalid_argument("kci_test: need at least 10 samples");

    std::vector<double> xs = x, ys = y;
    standardize_inplace(xs);
    standardize_inplace(ys);

    Matrix xm(n, 1), ym(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        xm(i, 0) = xs[i];
        ym(i, 0) = ys[i];
    }
    Matrix kx = gaussian_kernel(xm);
    Matrix ky = gaussian_kernel(ym);
    center_inplace(kx);
    center_inplace(ky);

    Matrix rx, ry;
    if (z.cols() == 0) {
        rx = std::move(kx);
        ry = std::move(ky);
    } else {
        Matrix zs = z;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            auto col = zs.column(j);
            standardize_inplace(col);
            zs.set_column(j, col);
        }
        Matrix kz = gaussian_kernel(zs);
        center_inplace(kz);
        // P = I - Kz (Kz + eps I)^{-1} = eps (Kz + eps I)^{-1}
        Matrix reg = kz;
        for (std::size_t i = 0; i < n; ++i) reg(i, i) += config.ridge;
        Matrix p = lu_decompose(reg).inverse();
        p *= config.ridge;
        rx = matmul(matmul(p, kx), p);
        ry = matmul(matmul(p, ky), p);
    }

    const double observed = kernels::dot(rx.data(), ry.data(), rx.size());

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> gathered(n);
    std::size_t at_least = 0;
    for (std::size_t b = 0; b < config.permutations; ++b) {
        std::shuffle(perm.begin(), perm.end(), rng);
        // trace(Rx_perm * Ry) with Rx_perm[i][j] = Rx[perm[i]][perm[j]]
        double stat = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* rxp = rx.row(perm[i]);
            for (std::size_t j = 0; j < n; ++j) gathered[j] = rxp[perm[j]];
            stat += kernels::dot(gathered.data(), ry.row(i), n);
        }
        if (stat >= observed) ++at_least;
    }
    return static_cast<double>(1 + at_least) / static_cast<double>(1 + config.permutations);
}

CITestResult kci_repeated(const Matrix& data, std::size_t target_col, std::size_t var_col,
                          const std::vector<std::size_t>& conditioning_cols,
                          std::size_t replicates, const KciConfig& config,
                          const std::string& hypothesis) {
    if (replicates < 2) throw std::invalid_argument("kci_repeated: need at least 2 replicates");
    const std::size_t n = data.rows();
    std::vector<double> x = data.column(var_col);
    std::vector<double> y = data.column(target_col);
    Matrix z(n, conditioning_cols.size());
    for (std::size_t j = 0; j < conditioning_cols.size(); ++j)
        z.set_column(j, data.column(conditioning_cols[j]));

    std::vector<double> ps;
    ps.reserve(replicates);
    for (std::size_t r = 0; r < replicates; ++r) {
        KciConfig c = config;
        c.seed = config.seed + r;  // replicate randomness: permutation seeds only
        ps.push_back(kci_test(x, y, z, c));
    }
    CITestResult result;
    result.hypothesis = hypothesis;
    result.replicates = replicates;
    result.p_mean = kernels::sum(ps.data(), ps.size()) / static_cast<double>(replicates);
    double ss = 0.0;
    for (double p : ps) ss += (p - result.p_mean) * (p - result.p_mean);
    result.p_sd = std::sqrt(ss / static_cast<double>(replicates - 1));
    return result;
}

}  // namespace evplan::evalsuite
