#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace evplan {

// Dense row-major matrix. Sized for this project's workloads: d x d graph
// matrices (d <= ~15), n x d data matrices, and n x n kernel matrices.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }
    std::span<const double> row_span(std::size_t i) const { return {row(i), cols_}; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    Matrix& operator+=(const Matrix& o);
    Matrix& operator-=(const Matrix& o);
    Matrix& operator*=(double s);
    Matrix transposed() const;

    std::vector<double> column(std::size_t j) const;
    void set_column(std::size_t j, std::span<const double> v);

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

// C = A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = A^T * B without forming A^T
Matrix matmul_at_b(const Matrix& a, const Matrix& b);

double frobenius_sq(const Matrix& a);
double max_abs(const Matrix& a);

// y = A * x
std::vector<double> matvec(const Matrix& a, std::span<const double> x);

// LU factorization with partial pivoting of a square matrix.
struct LuDecomposition {
    Matrix lu;                 // packed L (unit diagonal) and U
    std::vector<std::size_t> perm;
    int sign = 1;
    bool singular = false;

    double log_det_abs() const;   // log|det|; -inf if singular
    double det_sign() const;      // sign of det, 0 if singular
    std::vector<double> solve(std::span<const double> b) const;
    Matrix solve(const Matrix& b) const;
    Matrix inverse() const;
};
LuDecomposition lu_decompose(const Matrix& a);

// Cholesky of a symmetric positive definite matrix (lower factor).
// Throws std::runtime_error if the matrix is not positive definite.
Matrix cholesky(const Matrix& a);
std::vector<double> cholesky_solve(const Matrix& chol_lower, std::span<const double> b);

// Matrix exponential by scaling and squaring with a truncated Taylor series.
Matrix matrix_exponential(const Matrix& a);

// Spectral radius of an elementwise-nonnegative matrix via power iteration.
double spectral_radius_nonneg(const Matrix& a, std::size_t max_iter = 200, double tol = 1e-12);

}  // namespace evplan
