#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace smoothlab {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    /// Takes ownership of `data`; throws ContractViolation on size mismatch or non-finite entries.
    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix constant(std::size_t rows, std::size_t cols, double value);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double scale);

    bool all_finite() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double scale);
Matrix operator*(double scale, Matrix a);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
/// Largest absolute entry.
double max_abs(const Matrix& m);
/// ‖m‖_{2,∞}: largest Euclidean row norm.
double max_row_norm(const Matrix& m);
std::vector<double> column_sums(const Matrix& m);
double euclidean_norm(std::span<const double> v);
/// Largest |m_ij - m_ji|.
double max_asymmetry(const Matrix& m);

struct EigenPair {
    double value;
    std::vector<double> vector;
};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Eigenpairs are sorted by descending eigenvalue; eigenvectors are unit-norm.
/// Throws ContractViolation if `m` is not square or is asymmetric beyond 1e-10.
std::vector<EigenPair> sym_eigs(const Matrix& m);

/// Eigenvalues only (descending). Same solver without accumulating rotations.
std::vector<double> sym_eigenvalues(const Matrix& m);

/// Largest singular value via power iteration on mᵀm, started from the
/// normalized all-ones vector (max 10 000 iterations).
double spectral_norm(const Matrix& m);

} // namespace smoothlab
