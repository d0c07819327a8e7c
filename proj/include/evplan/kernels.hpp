#pragma once

#include <cstddef>
#include <string_view>

// Low-level dense kernels used by the inner loops of the structure-learning
// optimizers and the kernel CI test. Each op has a scalar reference
// implementation and, on x86 with AVX2, a vectorized variant; the active
// backend is chosen once at startup from CPUID. Both backends are exposed so
// tests can assert equivalence.

namespace evplan::kernels {

struct Backend {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    double (*sum)(const double* a, std::size_t n);
    double (*sq_norm)(const double* a, std::size_t n);
    double (*sq_dist)(const double* a, const double* b, std::size_t n);
    // out[i] = sign(x[i]) * max(|x[i]| - t, 0)
    void (*soft_threshold)(const double* x, double t, double* out, std::size_t n);
    void (*scale)(double alpha, double* x, std::size_t n);
    // y[i] += x[i] * x[i]  (Hadamard-square accumulate)
    void (*hadamard_sq_acc)(const double* x, double* y, std::size_t n);
    const char* name;
};

const Backend& scalar();
#if defined(__x86_64__) || defined(__i386__)
const Backend& avx2();
bool avx2_available();
#endif

// Backend selected at load time (scalar unless AVX2 is present).
const Backend& active();
std::string_view active_name();

// Convenience forwarders through the active backend.
inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double sum(const double* a, std::size_t n) { return active().sum(a, n); }
inline double sq_norm(const double* a, std::size_t n) { return active().sq_norm(a, n); }
inline double sq_dist(const double* a, const double* b, std::size_t n) { return active().sq_dist(a, b, n); }
inline void soft_threshold(const double* x, double t, double* out, std::size_t n) { active().soft_threshold(x, t, out, n); }
inline void scale(double alpha, double* x, std::size_t n) { active().scale(alpha, x, n); }
inline void hadamard_sq_acc(const double* x, double* y, std::size_t n) { active().hadamard_sq_acc(x, y, n); }

}  // namespace evplan::kernels
