#if defined(__x86_64__) || defined(__i386__)

#include "evplan/kernels.hpp"

#include <cmath>
#include <immintrin.h>

namespace evplan::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double sum_avx2(const double* a, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
    double acc = hsum(acc0);
    for (; i < n; ++i) acc += a[i];
    return acc;
}

double sq_norm_avx2(const double* a, std::size_t n) { return dot_avx2(a, a, n); }

double sq_dist_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc0 = _mm256_fmadd_pd(d, d, acc0);
    }
    double acc = hsum(acc0);
    for (; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

void soft_threshold_avx2(const double* x, double t, double* out, std::size_t n) {
    const __m256d vt = _mm256_set1_pd(t);
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        __m256d sign = _mm256_and_pd(v, sign_mask);
        __m256d mag = _mm256_max_pd(_mm256_sub_pd(_mm256_andnot_pd(sign_mask, v), vt), zero);
        _mm256_storeu_pd(out + i, _mm256_or_pd(mag, sign));
    }
    for (; i < n; ++i) {
        const double m = std::fabs(x[i]) - t;
        out[i] = m > 0.0 ? std::copysign(m, x[i]) : 0.0;
    }
}

void scale_avx2(double alpha, double* x, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void hadamard_sq_acc_avx2(const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vx, vx, _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += x[i] * x[i];
}

const Backend kAvx2 = {
    dot_avx2,   axpy_avx2,           sum_avx2,   sq_norm_avx2,
    sq_dist_avx2, soft_threshold_avx2, scale_avx2, hadamard_sq_acc_avx2,
    "avx2",
};

}  // namespace

const Backend& avx2() { return kAvx2; }

bool avx2_available() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace evplan::kernels

#endif  // x86
