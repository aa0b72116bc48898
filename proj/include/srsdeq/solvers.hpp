#pragma once

// Fixed-point solvers for z = f(z): naive iteration, Anderson acceleration
// (type II, Walker–Ni form) and Broyden's "good" method on g(z) = f(z) − z.
//
// Iteration counting: the residual of z0 is evaluated first; each iteration
// then produces a new iterate and evaluates its residual. `iters` is the
// number of new iterates, so a warm start at the solution costs 0 iterations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/parallel.hpp"

namespace srsdeq {

enum class SolverMethod { naive, anderson, broyden };

inline std::string to_string(SolverMethod m) {
    switch (m) {
        case SolverMethod::naive: return "naive";
        case SolverMethod::anderson: return "anderson";
        case SolverMethod::broyden: return "broyden";
    }
    return "unknown";
}

inline SolverMethod parse_solver_method(std::string_view s) {
    if (s == "naive") return SolverMethod::naive;
    if (s == "anderson") return SolverMethod::anderson;
    if (s == "broyden") return SolverMethod::broyden;
    throw ArgumentError("unknown solver method '" + std::string(s) + "'");
}

struct SolverConfig {
    SolverMethod method = SolverMethod::anderson;
    double tol = 1e-3;              // relative residual threshold
    std::size_t max_iters = 30;     // iteration budget L
    std::size_t anderson_memory = 5;  // stored (z, f(z)) pairs; 1 reduces to naive
    double anderson_damping = 1.0;  // β
    double anderson_ridge = 1e-4;   // λ, relative to the column-normalised Gram matrix

    void validate() const {
        if (!(tol > 0.0)) throw ArgumentError("solver tol must be > 0");
        if (max_iters < 1) throw ArgumentError("solver max_iters must be >= 1");
        if (anderson_memory < 1) throw ArgumentError("anderson_memory must be >= 1");
        if (!(anderson_damping > 0.0 && anderson_damping <= 1.0))
            throw ArgumentError("anderson_damping must lie in (0,1]");
        if (!(anderson_ridge >= 0.0)) throw ArgumentError("anderson_ridge must be >= 0");
    }

    friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct SolverResult {
    Vector z;                  // lowest-residual iterate seen
    double residual = 0.0;     // relative residual of z
    double initial_residual = 0.0;
    std::size_t iters = 0;
    bool converged = false;
    std::vector<double> residual_trace;  // one entry per iteration
    std::size_t fallback_steps = 0;      // Anderson LS failures / skipped Broyden updates
};

/// ‖f(z) − z‖ / (‖f(z)‖ + 1e-8)
inline double relative_residual(const Vector& z, const Vector& fz) {
    return l2_norm(fz - z) / (l2_norm(fz) + 1e-8);
}

/// One plain fixed-point step z ← f(z, x).
inline Vector step_naive(const DeqCellParams& cell, const Vector& x, const Vector& z) {
    return cell_forward(cell, z, x);
}

/// Most recent (z, f(z)) pairs, oldest first, capped at the configured memory.
class AndersonHistory {
public:
    explicit AndersonHistory(std::size_t memory) : memory_(std::max<std::size_t>(memory, 1)) {}

    void push(Vector z, Vector fz) {
        if (!zs_.empty() && z.size() != zs_.front().size())
            throw DimensionError("AndersonHistory: state size changed");
        zs_.push_back(std::move(z));
        fs_.push_back(std::move(fz));
        while (zs_.size() > memory_) {
            zs_.pop_front();
            fs_.pop_front();
        }
    }

    std::size_t size() const noexcept { return zs_.size(); }
    std::size_t memory() const noexcept { return memory_; }
    const Vector& z(std::size_t i) const { return zs_[i]; }
    const Vector& fz(std::size_t i) const { return fs_[i]; }

private:
    std::size_t memory_;
    std::deque<Vector> zs_;
    std::deque<Vector> fs_;
};

struct AndersonStep {
    Vector next;
    bool fell_back = false;
};

/// Anderson mixing over the stored history. Minimises
/// ‖F_k − ΔF γ‖² + λ‖Dγ‖² (D normalises the columns of ΔF) and returns
/// z_k − ΔZ γ + β (F_k − ΔF γ). A singular least-squares system falls back to
/// the damped plain step.
inline AndersonStep step_anderson(const AndersonHistory& h, const SolverConfig& cfg) {
    if (h.size() == 0) throw ArgumentError("step_anderson: empty history");
    const std::size_t last = h.size() - 1;
    const double beta = cfg.anderson_damping;
    const Vector& zk = h.z(last);
    const Vector fk = h.fz(last) - zk;

    auto damped_plain = [&] {
        Vector next = zk;
        next.axpy(beta, fk);
        return next;
    };
    if (h.size() == 1) return {damped_plain(), false};

    const std::size_t m = last;
    std::vector<Vector> dF;
    std::vector<Vector> dZ;
    std::vector<double> scale(m);
    dF.reserve(m);
    dZ.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        Vector fj1 = h.fz(j + 1) - h.z(j + 1);
        Vector fj = h.fz(j) - h.z(j);
        dF.push_back(fj1 - fj);
        dZ.push_back(h.z(j + 1) - h.z(j));
        scale[j] = l2_norm(dF.back());
        if (!(scale[j] > 0.0)) return {damped_plain(), true};
    }

    Matrix gram(m, m);
    std::vector<double> rhs(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i; j < m; ++j) {
            const double v = dot(dF[i], dF[j]) / (scale[i] * scale[j]);
            gram(i, j) = v;
            gram(j, i) = v;
        }
        gram(i, i) += cfg.anderson_ridge;
        rhs[i] = dot(dF[i], fk) / scale[i];
    }

    Vector gamma;
    try {
        gamma = dense_solve(gram, Vector::unchecked(std::move(rhs)), 1e-10);
    } catch (const SingularError&) {
        return {damped_plain(), true};
    }
    if (!gamma.is_finite()) return {damped_plain(), true};

    Vector next = zk;
    Vector resid = fk;
    for (std::size_t j = 0; j < m; ++j) {
        const double g = gamma[j] / scale[j];
        next.axpy(-g, dZ[j]);
        resid.axpy(-g, dF[j]);
    }
    next.axpy(beta, resid);
    return {std::move(next), false};
}

/// Dense inverse-Jacobian estimate for g(z) = f(z) − z, initialised to −I so
/// the first step is a plain fixed-point step.
class BroydenState {
public:
    explicit BroydenState(std::size_t n) : inv_jac_(Matrix::identity(n)) { inv_jac_ *= -1.0; }

    const Matrix& inverse_jacobian() const noexcept { return inv_jac_; }
    std::size_t skipped_updates() const noexcept { return skipped_; }

private:
    friend struct BroydenStepper;
    Matrix inv_jac_;
    std::optional<Vector> prev_z_;
    std::optional<Vector> prev_g_;
    std::size_t skipped_ = 0;
};

struct BroydenStepper {
    static constexpr double kStepCap = 100.0;  // max ‖step‖ / ‖g‖

    static Vector step(BroydenState& s, const Vector& z, const Vector& g) {
        bool skipped = false;
        if (s.prev_z_) {
            const Vector dz = z - *s.prev_z_;
            const Vector dg = g - *s.prev_g_;
            const Vector h_dg = matvec(s.inv_jac_, dg);
            const double denom = dot(dz, h_dg);
            if (std::abs(denom) < 1e-12 * l2_norm(dz) * l2_norm(h_dg) || denom == 0.0) {
                skipped = true;
                ++s.skipped_;
            } else {
                // H += (Δz − HΔg)(ΔzᵀH) / (ΔzᵀHΔg)
                const Vector u = dz - h_dg;
                const Vector w = matvec_transposed(s.inv_jac_, dz);
                add_outer(s.inv_jac_, 1.0 / denom, u, w);
            }
        }
        s.prev_z_ = z;
        s.prev_g_ = g;
        if (skipped) {
            Vector next = z;
            next.axpy(0.5, g);
            return next;
        }
        Vector step = matvec(s.inv_jac_, g);
        step *= -1.0;
        const double gn = l2_norm(g);
        const double sn = l2_norm(step);
        if (sn > kStepCap * gn && sn > 0.0) step *= kStepCap * gn / sn;
        return z + step;
    }
};

/// Quasi-Newton step z − H g(z) with the "good" Broyden rank-one update of H.
/// A vanishing update denominator skips the update and takes the damped plain
/// step z + g/2.
inline Vector step_broyden(BroydenState& state, const Vector& z, const Vector& g) {
    return BroydenStepper::step(state, z, g);
}

/// Solves z = f(z) from z0 for any map `f : Vector -> Vector`.
template <class Map>
SolverResult solve_map(Map&& f, Vector z0, const SolverConfig& cfg) {
    cfg.validate();
    if (!z0.is_finite()) throw ArgumentError("solve: initial state is not finite");

    auto eval = [&](const Vector& z, std::size_t iter) {
        Vector fz = f(z);
        if (fz.size() != z.size()) throw DimensionError("solve: map changed the state size");
        if (!fz.is_finite() || !z.is_finite())
            throw NumericalError("solve: non-finite value at iteration " + std::to_string(iter),
                                 iter);
        return fz;
    };

    SolverResult res;
    Vector z = std::move(z0);
    Vector fz = eval(z, 0);
    double r = relative_residual(z, fz);
    res.initial_residual = r;
    res.residual = r;
    res.z = z;
    if (r <= cfg.tol) {
        res.converged = true;
        return res;
    }
    res.residual_trace.reserve(cfg.max_iters);

    AndersonHistory history(cfg.method == SolverMethod::anderson ? cfg.anderson_memory : 1);
    std::optional<BroydenState> broyden;
    if (cfg.method == SolverMethod::broyden) broyden.emplace(z.size());

    for (std::size_t k = 1; k <= cfg.max_iters; ++k) {
        Vector next;
        switch (cfg.method) {
            case SolverMethod::naive: next = std::move(fz); break;
            case SolverMethod::anderson: {
                history.push(z, fz);
                AndersonStep st = step_anderson(history, cfg);
                if (st.fell_back) ++res.fallback_steps;
                next = std::move(st.next);
                break;
            }
            case SolverMethod::broyden: {
                const std::size_t before = broyden->skipped_updates();
                next = step_broyden(*broyden, z, fz - z);
                res.fallback_steps += broyden->skipped_updates() - before;
                break;
            }
        }
        z = std::move(next);
        fz = eval(z, k);
        r = relative_residual(z, fz);
        res.residual_trace.push_back(r);
        res.iters = k;
        if (r < res.residual) {
            res.residual = r;
            res.z = z;
        }
        if (r <= cfg.tol) break;
    }
    res.converged = res.residual <= cfg.tol;
    return res;
}

/// Solves the cell's fixed point for input x starting from z0.
inline SolverResult solve(const DeqCellParams& cell, const Vector& x, Vector z0,
                          const SolverConfig& cfg) {
    if (z0.size() != cell.hidden_dim()) throw DimensionError("solve: z0 has the wrong size");
    const Vector inj = cell_injection(cell, x);
    return solve_map([&](const Vector& z) { return cell_apply(cell, z, inj); }, std::move(z0),
                     cfg);
}

/// Independent per-lane solves sharing one config. Members may run
/// concurrently; a NumericalError is rethrown with the lane index attached.
inline std::vector<SolverResult> solve_batch(const DeqCellParams& cell,
                                             const std::vector<Vector>& xs,
                                             const std::vector<Vector>& z0s,
                                             const SolverConfig& cfg, std::size_t jobs = 1) {
    if (xs.size() != z0s.size()) throw DimensionError("solve_batch: lane count mismatch");
    std::vector<SolverResult> out(xs.size());
    parallel_for(xs.size(), jobs, [&](std::size_t i) {
        try {
            out[i] = solve(cell, xs[i], z0s[i], cfg);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " (lane " + std::to_string(i) + ")",
                                 e.iteration(), static_cast<long>(i));
        }
    });
    return out;
}

inline bool batch_converged(const std::vector<SolverResult>& results) {
    return std::all_of(results.begin(), results.end(),
                       [](const SolverResult& r) { return r.converged; });
}

}  // namespace srsdeq
