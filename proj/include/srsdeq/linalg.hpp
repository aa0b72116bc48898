#pragma once

// Small dense linear algebra: row-major double matrices and vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srsdeq/errors.hpp"

namespace srsdeq {

namespace detail {

inline bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
}

inline void require_finite(std::span<const double> xs, const char* what) {
    if (!all_finite(xs)) throw ArgumentError(std::string(what) + ": non-finite entry");
}

}  // namespace detail

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {
        detail::require_finite(data_, "Vector");
    }
    Vector(std::initializer_list<double> xs) : data_(xs) { detail::require_finite(data_, "Vector"); }
    explicit Vector(std::vector<double> xs) : data_(std::move(xs)) {
        detail::require_finite(data_, "Vector");
    }

    /// Skips the finiteness check; for results of arithmetic on checked values.
    static Vector unchecked(std::vector<double> xs) {
        Vector v;
        v.data_ = std::move(xs);
        return v;
    }

    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::span<const double> span() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool is_finite() const { return detail::all_finite(data_); }

    Vector& operator+=(const Vector& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Vector& operator-=(const Vector& o) {
        check_same(o, "-=");
        for (std::size_t i = 0; i < size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Vector& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    /// this += s * o
    Vector& axpy(double s, const Vector& o) {
        check_same(o, "axpy");
        for (std::size_t i = 0; i < size(); ++i) data_[i] += s * o.data_[i];
        return *this;
    }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    void check_same(const Vector& o, const char* op) const {
        if (o.size() != size())
            throw DimensionError(std::string("Vector ") + op + ": size " + std::to_string(size()) +
                                 " vs " + std::to_string(o.size()));
    }

    std::vector<double> data_;
};

inline Vector operator+(Vector a, const Vector& b) { return a += b; }
inline Vector operator-(Vector a, const Vector& b) { return a -= b; }
inline Vector operator*(double s, Vector v) { return v *= s; }
inline Vector operator*(Vector v, double s) { return v *= s; }

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Euclidean norm, scaled to avoid overflow for large entries.
inline double l2_norm(const Vector& v) {
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) {
        const double r = x / scale;
        s += r * r;
    }
    return scale * std::sqrt(s);
}

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        detail::require_finite(data_, "Matrix");
    }
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
        : rows_(rows), cols_(cols), data_(std::move(row_major)) {
        if (data_.size() != rows_ * cols_)
            throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                                 " != rows*cols " + std::to_string(rows_ * cols_));
        detail::require_finite(data_, "Matrix");
    }
    Matrix(std::initializer_list<std::initializer_list<double>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.reserve(rows_ * cols_);
        for (const auto& r : rows) {
            if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
            data_.insert(data_.end(), r.begin(), r.end());
        }
        detail::require_finite(data_, "Matrix");
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    static Matrix diagonal(std::span<const double> d) {
        Matrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        detail::require_finite(m.data_, "Matrix::diagonal");
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }
    std::span<const double> span() const noexcept { return data_; }
    std::span<double> mutable_span() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    bool is_finite() const { return detail::all_finite(data_); }

    Matrix& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Matrix operator*(double s, Matrix m) { return m *= s; }

inline Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.size())
        throw DimensionError("matvec: matrix has " + std::to_string(m.cols()) +
                             " columns, vector has " + std::to_string(v.size()) + " entries");
    std::vector<double> out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double s = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) s += row[c] * v[c];
        out[r] = s;
    }
    return Vector::unchecked(std::move(out));
}

/// mᵀ·v without materialising the transpose.
inline Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows() != v.size()) throw DimensionError("matvec_transposed: dimension mismatch");
    std::vector<double> out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        const double vr = v[r];
        for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
    }
    return Vector::unchecked(std::move(out));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

/// m += s · u vᵀ
inline void add_outer(Matrix& m, double s, const Vector& u, const Vector& v) {
    if (m.rows() != u.size() || m.cols() != v.size())
        throw DimensionError("add_outer: dimension mismatch");
    auto data = m.mutable_span();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double su = s * u[r];
        for (std::size_t c = 0; c < m.cols(); ++c) data[r * m.cols() + c] += su * v[c];
    }
}

/// Power iteration on mᵀm. Returns the running maximum of ‖m·v‖ over unit
/// iterates, so the estimate never decreases with more iterations.
inline double spectral_norm_estimate(const Matrix& m, std::size_t iters) {
    if (m.rows() == 0 || m.cols() == 0) return 0.0;
    iters = std::max<std::size_t>(iters, 1);
    // Deterministic start with no special alignment to coordinate axes.
    std::vector<double> start(m.cols());
    for (std::size_t i = 0; i < start.size(); ++i)
        start[i] = 1.0 + 0.1 * std::sin(1.0 + static_cast<double>(i) * 0.7548776662466927);
    Vector v = Vector::unchecked(std::move(start));
    v *= 1.0 / l2_norm(v);

    double best = 0.0;
    for (std::size_t k = 0; k < iters; ++k) {
        const Vector mv = matvec(m, v);
        const double sigma = l2_norm(mv);
        best = std::max(best, sigma);
        Vector next = matvec_transposed(m, mv);
        const double n = l2_norm(next);
        if (n == 0.0) break;
        next *= 1.0 / n;
        v = std::move(next);
    }
    return best;
}

/// Gaussian elimination with partial pivoting.
inline Vector dense_solve(const Matrix& a, const Vector& b, double pivot_tol = 1e-12) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw DimensionError("dense_solve: matrix is not square");
    if (b.size() != n) throw DimensionError("dense_solve: rhs size mismatch");

    std::vector<double> m(a.values());
    std::vector<double> x(b.values());
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double best = std::abs(m[k * n + k]);
        for (std::size_t r = k + 1; r < n; ++r) {
            const double v = std::abs(m[r * n + k]);
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (!(best > pivot_tol))
            throw SingularError("dense_solve: pivot " + std::to_string(best) + " at column " +
                                std::to_string(k));
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(m[k * n + c], m[piv * n + c]);
            std::swap(x[k], x[piv]);
        }
        const double inv = 1.0 / m[k * n + k];
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = m[r * n + k] * inv;
            if (f == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) m[r * n + c] -= f * m[k * n + c];
            x[r] -= f * x[k];
        }
    }
    for (std::size_t k = n; k-- > 0;) {
        double s = x[k];
        for (std::size_t c = k + 1; c < n; ++c) s -= m[k * n + c] * x[c];
        x[k] = s / m[k * n + k];
    }
    return Vector::unchecked(std::move(x));
}

}  // namespace srsdeq
