#include "evplan/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "evplan/kernels.hpp"

namespace evplan {

Matrix& Matrix::operator+=(const Matrix& o) {
    if (!same_shape(o)) throw std::invalid_argument("Matrix+=: shape mismatch");
    kernels::axpy(1.0, o.data(), data(), size());
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
    if (!same_shape(o)) throw std::invalid_argument("Matrix-=: shape mismatch");
    kernels::axpy(-1.0, o.data(), data(), size());
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    kernels::scale(s, data(), size());
    return *this;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

std::vector<double> Matrix::column(std::size_t j) const {
    std::vector<double> c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
}

void Matrix::set_column(std::size_t j, std::span<const double> v) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) kernels::axpy(aik, b.row(k), ci, b.cols());
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at_b: shape mismatch");
    Matrix c(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i)
            if (ak[i] != 0.0) kernels::axpy(ak[i], bk, c.row(i), b.cols());
    }
    return c;
}

double frobenius_sq(const Matrix& a) { return kernels::sq_norm(a.data(), a.size()); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data()[i]));
    return m;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (x.size() != a.cols()) throw std::invalid_argument("matvec: shape mismatch");
    std::vector<double> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = kernels::dot(a.row(i), x.data(), a.cols());
    return y;
}

LuDecomposition lu_decompose(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("lu: not square");
    const std::size_t n = a.rows();
    LuDecomposition d;
    d.lu = a;
    d.perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.perm[i] = i;
    Matrix& m = d.lu;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::fabs(m(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double v = std::fabs(m(i, k));
            if (v > best) { best = v; piv = i; }
        }
        if (best == 0.0) { d.singular = true; continue; }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
            std::swap(d.perm[k], d.perm[piv]);
            d.sign = -d.sign;
        }
        const double inv = 1.0 / m(k, k);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = m(i, k) * inv;
            m(i, k) = f;
            if (f != 0.0) kernels::axpy(-f, m.row(k) + k + 1, m.row(i) + k + 1, n - k - 1);
        }
    }
    return d;
}

double LuDecomposition::log_det_abs() const {
    if (singular) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (std::size_t i = 0; i < lu.rows(); ++i) acc += std::log(std::fabs(lu(i, i)));
    return acc;
}

double LuDecomposition::det_sign() const {
    if (singular) return 0.0;
    double s = sign;
    for (std::size_t i = 0; i < lu.rows(); ++i)
        if (lu(i, i) < 0.0) s = -s;
    return s;
}

std::vector<double> LuDecomposition::solve(std::span<const double> b) const {
    const std::size_t n = lu.rows();
    if (singular) throw std::runtime_error("lu solve: singular matrix");
    if (b.size() != n) throw std::invalid_argument("lu solve: shape mismatch");
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
    for (std::size_t i = 1; i < n; ++i)
        x[i] -= kernels::dot(lu.row(i), x.data(), i);
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= lu(ii, j) * x[j];
        x[ii] = acc / lu(ii, ii);
    }
    return x;
}

Matrix LuDecomposition::solve(const Matrix& b) const {
    Matrix x(b.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        auto col = solve(std::span<const double>(b.column(j)));
        x.set_column(j, col);
    }
    return x;
}

Matrix LuDecomposition::inverse() const { return solve(Matrix::identity(lu.rows())); }

Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("cholesky: not square");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a(i, j) - kernels::dot(l.row(i), l.row(j), j);
            if (i == j) {
                if (acc <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    }
    return l;
}

std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
    const std::size_t n = l.rows();
    if (b.size() != n) throw std::invalid_argument("cholesky_solve: shape mismatch");
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
        y[i] -= kernels::dot(l.row(i), y.data(), i);
        y[i] /= l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) acc -= l(j, ii) * y[j];
        y[ii] = acc / l(ii, ii);
    }
    return y;
}

Matrix matrix_exponential(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expm: not square");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i])) throw std::invalid_argument("expm: non-finite entry");

    // 1-norm based scaling so the Taylor series of e^{A/2^s} converges fast.
    double norm1 = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < a.rows(); ++i) col += std::fabs(a(i, j));
        norm1 = std::max(norm1, col);
    }
    int s = 0;
    double scaled = norm1;
    while (scaled > 0.5) { scaled *= 0.5; ++s; }

    Matrix b = a;
    b *= std::ldexp(1.0, -s);

    Matrix result = Matrix::identity(a.rows());
    Matrix term = Matrix::identity(a.rows());
    for (int k = 1; k <= 40; ++k) {
        term = matmul(term, b);
        term *= 1.0 / k;
        result += term;
        if (max_abs(term) < 1e-18) break;
    }
    for (int i = 0; i < s; ++i) result = matmul(result, result);
    return result;
}

double spectral_radius_nonneg(const Matrix& a, std::size_t max_iter, double tol) {
    const std::size_t n = a.rows();
    if (n == 0) return 0.0;
    std::vector<double> v(n, 1.0 / static_cast<double>(n));
    double lambda = 0.0;
    for (std::size_t it = 0; it < max_iter; ++it) {
        auto w = matvec(a, v);
        double norm = 0.0;
        for (double x : w) norm = std::max(norm, std::fabs(x));
        if (norm == 0.0) return 0.0;
        for (double& x : w) x /= norm;
        if (std::fabs(norm - lambda) <= tol * std::max(1.0, norm)) {
            lambda = norm;
            break;
        }
        lambda = norm;
        v = std::move(w);
    }
    return lambda;
}

}  // namespace evplan
