#pragma once

// The weight-tied equilibrium cell z = tanh(W z + U x + b) with a linear
// readout head.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/stats.hpp"

namespace srsdeq {

inline constexpr std::size_t kSpectralIters = 500;

/// Cell parameters. `W` is the matrix actually applied; after
/// rescale_to_contraction its spectral norm is at most `gamma`.
struct DeqCellParams {
    Matrix W;
    Matrix U;
    Vector b;
    double gamma = 0.9;

    std::size_t hidden_dim() const noexcept { return W.rows(); }
    std::size_t input_dim() const noexcept { return U.cols(); }

    friend bool operator==(const DeqCellParams&, const DeqCellParams&) = default;
};

struct ReadoutParams {
    Matrix V;
    Vector c;

    friend bool operator==(const ReadoutParams&, const ReadoutParams&) = default;
};

struct DeqModel {
    DeqCellParams cell;
    ReadoutParams readout;
    std::size_t hidden_dim = 0;
    std::size_t input_dim = 0;
    std::size_t num_classes = 0;
    double sigma_train = 0.0;

    friend bool operator==(const DeqModel&, const DeqModel&) = default;
};

inline constexpr int kAbstain = -1;

inline void validate_cell(const DeqCellParams& p) {
    if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw ArgumentError("cell gamma must lie in (0,1), got " + std::to_string(p.gamma));
    if (p.W.rows() != p.W.cols()) throw DimensionError("cell W must be square");
    if (p.U.rows() != p.W.rows()) throw DimensionError("cell U rows must equal hidden_dim");
    if (p.b.size() != p.W.rows()) throw DimensionError("cell b length must equal hidden_dim");
}

inline void validate_model(const DeqModel& m) {
    validate_cell(m.cell);
    if (m.cell.hidden_dim() != m.hidden_dim || m.cell.input_dim() != m.input_dim)
        throw DimensionError("model dims disagree with cell parameters");
    if (m.readout.V.rows() != m.num_classes || m.readout.V.cols() != m.hidden_dim)
        throw DimensionError("readout V must be num_classes x hidden_dim");
    if (m.readout.c.size() != m.num_classes)
        throw DimensionError("readout c length must equal num_classes");
    if (m.num_classes < 1) throw ArgumentError("model needs at least one class");
    if (!(m.sigma_train >= 0.0)) throw ArgumentError("sigma_train must be >= 0");
}

/// U·x + b, the part of the cell that does not depend on z.
inline Vector cell_injection(const DeqCellParams& p, const Vector& x) {
    if (x.size() != p.input_dim())
        throw DimensionError("cell input has " + std::to_string(x.size()) + " entries, expected " +
                             std::to_string(p.input_dim()));
    Vector inj = matvec(p.U, x);
    inj += p.b;
    return inj;
}

/// tanh(W z + injection).
inline Vector cell_apply(const DeqCellParams& p, const Vector& z, const Vector& injection) {
    if (z.size() != p.hidden_dim())
        throw DimensionError("cell state has " + std::to_string(z.size()) + " entries, expected " +
                             std::to_string(p.hidden_dim()));
    Vector out = matvec(p.W, z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i] + injection[i]);
    return out;
}

inline Vector cell_forward(const DeqCellParams& p, const Vector& z, const Vector& x) {
    return cell_apply(p, z, cell_injection(p, x));
}

/// Scales W by gamma / max(gamma, ‖W‖₂) so the cell is a gamma-contraction in z.
/// Matrices already within 1e-9 relative of gamma are returned untouched, which
/// makes the operation idempotent.
inline DeqCellParams rescale_to_contraction(DeqCellParams p) {
    if (!(p.gamma > 0.0 && p.gamma < 1.0))
        throw ArgumentError("rescale_to_contraction: gamma must lie in (0,1)");
    const double norm = spectral_norm_estimate(p.W, kSpectralIters);
    if (norm > p.gamma * (1.0 + 1e-9)) p.W *= p.gamma / norm;
    return p;
}

inline Vector logits(const DeqModel& model, const Vector& z_star) {
    if (z_star.size() != model.hidden_dim)
        throw DimensionError("logits: state has " + std::to_string(z_star.size()) +
                             " entries, expected " + std::to_string(model.hidden_dim));
    Vector out = matvec(model.readout.V, z_star);
    out += model.readout.c;
    return out;
}

/// Argmax; ties go to the lowest index.
inline int classify(const Vector& logit_vec) {
    if (logit_vec.empty()) throw ArgumentError("classify: empty logits");
    std::size_t best = 0;
    for (std::size_t i = 1; i < logit_vec.size(); ++i)
        if (logit_vec[i] > logit_vec[best]) best = i;
    return static_cast<int>(best);
}

enum class WeightInit { gaussian, orthogonal };

/// Orthonormalises the columns of a square matrix (modified Gram–Schmidt).
inline Matrix orthonormal_columns(Matrix m) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw DimensionError("orthonormal_columns: matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d += m(i, k) * m(i, j);
            for (std::size_t i = 0; i < n; ++i) m(i, j) -= d * m(i, k);
        }
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) nrm += m(i, j) * m(i, j);
        nrm = std::sqrt(nrm);
        if (!(nrm > 1e-12)) throw SingularError("orthonormal_columns: rank-deficient input");
        for (std::size_t i = 0; i < n; ++i) m(i, j) /= nrm;
    }
    return m;
}

/// Random initialisation: Gaussian entries scaled by 1/sqrt(fan_in), cell
/// rescaled to a gamma-contraction. With WeightInit::orthogonal, W = gamma·Q
/// for a random orthogonal Q, so every direction contracts at rate gamma.
inline DeqModel make_random_model(std::size_t hidden_dim, std::size_t input_dim,
                                  std::size_t num_classes, double gamma, std::uint64_t seed,
                                  WeightInit w_init = WeightInit::gaussian) {
    CounterRng rng(seed, hidden_dim * 1000003 + input_dim, num_classes,
                   static_cast<std::uint64_t>(RngDomain::training));
    auto fill = [&rng](std::size_t rows, std::size_t cols, double scale) {
        std::vector<double> v(rows * cols);
        for (std::size_t i = 0; i < v.size(); i += 2) {
            const auto [a, b] = rng.next_normal_pair();
            v[i] = scale * a;
            if (i + 1 < v.size()) v[i + 1] = scale * b;
        }
        return Matrix(rows, cols, std::move(v));
    };
    DeqModel m;
    m.hidden_dim = hidden_dim;
    m.input_dim = input_dim;
    m.num_classes = num_classes;
    m.cell.gamma = gamma;
    m.cell.W = fill(hidden_dim, hidden_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    if (w_init == WeightInit::orthogonal) {
        m.cell.W = orthonormal_columns(std::move(m.cell.W));
        m.cell.W *= gamma;
    }
    m.cell.U = fill(hidden_dim, input_dim, 1.0 / std::sqrt(static_cast<double>(input_dim)));
    m.cell.b = Vector(hidden_dim);
    m.readout.V = fill(num_classes, hidden_dim, 1.0 / std::sqrt(static_cast<double>(hidden_dim)));
    m.readout.c = Vector(num_classes);
    m.cell = rescale_to_contraction(std::move(m.cell));
    validate_model(m);
    return m;
}

}  // namespace srsdeq
