#include "evplan/kernels.hpp"

#include <cmath>

namespace evplan::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double sq_norm_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * a[i];
    return acc;
}

double sq_dist_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void soft_threshold_scalar(const double* x, double t, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double m = std::fabs(x[i]) - t;
        out[i] = m > 0.0 ? std::copysign(m, x[i]) : 0.0;
    }
}

void scale_scalar(double alpha, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void hadamard_sq_acc_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i] * x[i];
}

const Backend kScalar = {
    dot_scalar,   axpy_scalar,           sum_scalar,   sq_norm_scalar,
    sq_dist_scalar, soft_threshold_scalar, scale_scalar, hadamard_sq_acc_scalar,
    "scalar",
};

}  // namespace

const Backend& scalar() { return kScalar; }

}  // namespace evplan::kernels
