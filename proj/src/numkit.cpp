#include "smoothlab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "smoothlab/error.hpp"

namespace smoothlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    require(data.size() == rows * cols,
            "matrix data has " + std::to_string(data.size()) + " entries, expected " +
                std::to_string(rows) + "x" + std::to_string(cols));
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    require(m.all_finite(), "matrix data contains non-finite entries");
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        require(row.size() == c, "ragged row in matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return from_data(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::constant(std::size_t rows, std::size_t cols, double value) {
    return Matrix(rows, cols, value);
}

Matrix& Matrix::operator+=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, "matrix sum shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require(rows_ == other.rows_ && cols_ == other.cols_, "matrix difference shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double scale) {
    for (double& v : data_) v *= scale;
    return *this;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double scale) { return a *= scale; }
Matrix operator*(double scale, Matrix a) { return a *= scale; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul: inner dimensions " + std::to_string(a.cols()) +
                                      " and " + std::to_string(b.rows()) + " differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            // Propagation matrices are mostly zeros.
            if (aik == 0.0) continue;
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn: row counts differ");
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        auto a_row = a.row(k);
        auto b_row = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a_row[i];
            if (aki == 0.0) continue;
            auto out_row = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt: column counts differ");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto a_row = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto b_row = b.row(j);
            out(i, j) = std::inner_product(a_row.begin(), a_row.end(), b_row.begin(), 0.0);
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
    Matrix out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    return out;
}

double euclidean_norm(std::span<const double> v) {
    // Scaled accumulation so that tiny backward signals do not underflow.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0 || !std::isfinite(scale)) return scale;
    double acc = 0.0;
    for (double x : v) {
        const double r = x / scale;
        acc += r * r;
    }
    return scale * std::sqrt(acc);
}

double frobenius_norm(const Matrix& m) { return euclidean_norm(m.values()); }

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.values()) best = std::max(best, std::abs(v));
    return best;
}

double max_row_norm(const Matrix& m) {
    double best = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) best = std::max(best, euclidean_norm(m.row(i)));
    return best;
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> sums(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) sums[j] += r[j];
    }
    return sums;
}

double max_asymmetry(const Matrix& m) {
    require(m.rows() == m.cols(), "max_asymmetry: matrix is not square");
    double worst = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            worst = std::max(worst, std::abs(m(i, j) - m(j, i)));
    return worst;
}

namespace {

constexpr int kMaxSweeps = 100;

void check_symmetric(const Matrix& m) {
    require(m.rows() == m.cols(), "sym_eigs: matrix is " + std::to_string(m.rows()) + "x" +
                                      std::to_string(m.cols()) + ", expected square");
    require(max_asymmetry(m) <= 1e-10, "sym_eigs: matrix is not symmetric within 1e-10");
}

double off_diagonal_norm(const Matrix& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j) acc += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(acc);
}

// Cyclic Jacobi on a symmetrized working copy. `vectors` (if non-null)
// accumulates the rotations so that input = V diag(a) Vᵀ.
std::vector<double> jacobi(Matrix a, Matrix* vectors) {
    const std::size_t n = a.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = avg;
            a(j, i) = avg;
        }
    if (vectors) *vectors = Matrix::identity(n);

    const double scale = frobenius_norm(a);
    const double target = std::max(scale * 1e-15, 1e-300);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        if (off_diagonal_norm(a) <= target) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::hypot(1.0, tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                // A <- A J (columns p, q)
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                // A <- Jᵀ A (rows p, q)
                auto row_p = a.row(p);
                auto row_q = a.row(q);
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = row_p[k];
                    const double aqk = row_q[k];
                    row_p[k] = c * apk - s * aqk;
                    row_q[k] = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                if (vectors) {
                    Matrix& v = *vectors;
                    for (std::size_t k = 0; k < n; ++k) {
                        const double vkp = v(k, p);
                        const double vkq = v(k, q);
                        v(k, p) = c * vkp - s * vkq;
                        v(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
    return diag;
}

} // namespace

std::vector<EigenPair> sym_eigs(const Matrix& m) {
    check_symmetric(m);
    Matrix v;
    const std::vector<double> values = jacobi(m, &v);
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
    std::vector<EigenPair> pairs;
    pairs.reserve(n);
    for (std::size_t idx : order) {
        EigenPair pair{values[idx], std::vector<double>(n)};
        for (std::size_t k = 0; k < n; ++k) pair.vector[k] = v(k, idx);
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

std::vector<double> sym_eigenvalues(const Matrix& m) {
    check_symmetric(m);
    std::vector<double> values = jacobi(m, nullptr);
    std::sort(values.begin(), values.end(), std::greater<>());
    return values;
}

namespace {

constexpr int kMaxPowerIterations = 10000;

// Returns the converged Rayleigh quotient of `gram` from start vector `v`.
double power_iterate(const Matrix& gram, std::vector<double> v) {
    const std::size_t d = v.size();
    const double norm0 = euclidean_norm(v);
    for (double& x : v) x /= norm0;
    std::vector<double> w(d);
    double rq = 0.0;
    for (int it = 0; it < kMaxPowerIterations; ++it) {
        for (std::size_t i = 0; i < d; ++i) {
            auto g = gram.row(i);
            w[i] = std::inner_product(g.begin(), g.end(), v.begin(), 0.0);
        }
        const double next = std::inner_product(v.begin(), v.end(), w.begin(), 0.0);
        const double wn = euclidean_norm(w);
        if (wn == 0.0) return 0.0;
        for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / wn;
        const bool settled = it > 0 && std::abs(next - rq) <= 1e-15 * std::abs(next);
        rq = next;
        if (settled) break;
    }
    return rq;
}

} // namespace

double spectral_norm(const Matrix& m) {
    require(!m.empty(), "spectral_norm: empty matrix");
    // Iterate on the smaller Gram matrix; both share the nonzero spectrum.
    const Matrix gram = m.cols() <= m.rows() ? matmul_tn(m, m) : matmul_nt(m, m);
    const std::size_t d = gram.rows();
    double rq = power_iterate(gram, std::vector<double>(d, 1.0));
    if (rq <= 0.0) {
        std::vector<double> perturbed(d);
        for (std::size_t i = 0; i < d; ++i) perturbed[i] = 1.0 + 0.5 * std::sin(1.0 + static_cast<double>(i));
        rq = power_iterate(gram, std::move(perturbed));
    }
    return std::sqrt(std::max(rq, 0.0));
}

} // namespace smoothlab
