#pragma once

// Metrics over certification reports and a plain PGD-ℓ2 attack on the base
// model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/smoothing.hpp"
#include "srsdeq/solvers.hpp"
#include "srsdeq/training.hpp"

namespace srsdeq {

enum class CertifyMode { standard, srs };

inline std::string to_string(CertifyMode m) { return m == CertifyMode::srs ? "srs" : "standard"; }

inline CertifyMode parse_certify_mode(const std::string& s) {
    if (s == "standard") return CertifyMode::standard;
    if (s == "srs") return CertifyMode::srs;
    throw ArgumentError("unknown certification mode '" + s + "'");
}

struct ReportRow {
    std::size_t point_index = 0;
    int true_label = 0;
    int predicted = kAbstain;
    double radius = 0.0;
    CertifyMode mode = CertifyMode::standard;
    std::string status = "ok";  // "ok" or "failed: <reason>"
    std::vector<std::size_t> counts;
    double p_a_lower = 0.0;
    std::optional<double> pm_upper;          // srs only
    std::optional<std::size_t> n_a;          // srs only
    std::optional<std::size_t> n_a_effective;  // srs only
    std::optional<std::int64_t> iters_saved;   // srs only
    std::optional<double> pm_gap;            // srs diagnostic runs only
    double wall_time = 0.0;
    std::size_t iters_total = 0;

    bool correct() const noexcept { return predicted != kAbstain && predicted == true_label; }
};

/// Fraction of rows predicted correctly with radius strictly above each threshold.
inline std::vector<double> certified_accuracy(const std::vector<ReportRow>& rows,
                                              const std::vector<double>& thresholds) {
    if (rows.empty()) throw ArgumentError("certified_accuracy: no rows");
    std::vector<double> out;
    out.reserve(thresholds.size());
    for (double r : thresholds) {
        if (!(r >= 0.0)) throw ArgumentError("certified_accuracy: thresholds must be >= 0");
        std::size_t hit = 0;
        for (const auto& row : rows)
            if (row.correct() && row.radius > r) ++hit;
        out.push_back(static_cast<double>(hit) / static_cast<double>(rows.size()));
    }
    return out;
}

/// Average certified radius: wrong and abstained rows contribute zero but are
/// counted in the denominator.
inline double acr(const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw ArgumentError("acr: no rows");
    double s = 0.0;
    for (const auto& row : rows)
        if (row.correct()) s += row.radius;
    return s / static_cast<double>(rows.size());
}

/// Relative radius difference |r_base − r_srs| / r_base.
inline double rrd(double r_base, double r_srs) {
    if (!(r_base > 0.0)) throw ArgumentError("rrd: baseline radius must be > 0");
    return std::abs(r_base - r_srs) / r_base;
}

/// p̄_m minus the observed rate at which serialized predictions of c_A
/// disagree with the reference, over all N samples of the point.
inline double pm_gap(double pm_upper, int c_a, const std::vector<int>& ref_preds,
                     const std::vector<int>& srs_preds) {
    if (ref_preds.size() != srs_preds.size())
        throw ArgumentError("pm_gap: prediction lists differ in length");
    std::size_t n_a = 0;
    std::size_t mis = 0;
    for (std::size_t i = 0; i < srs_preds.size(); ++i) {
        if (srs_preds[i] != c_a) continue;
        ++n_a;
        if (ref_preds[i] != c_a) ++mis;
    }
    if (n_a == 0) throw ArgumentError("pm_gap: no serialized prediction of the top class");
    return pm_upper - static_cast<double>(mis) / static_cast<double>(n_a);
}

inline double pm_gap(const ReportRow& row, const std::vector<int>& ref_preds,
                     const std::vector<int>& srs_preds) {
    if (row.mode != CertifyMode::srs || !row.pm_upper)
        throw ArgumentError("pm_gap: row is not a serialized certification");
    const int c_a = top_two(row.counts).first;
    return pm_gap(*row.pm_upper, c_a, ref_preds, srs_preds);
}

/// Fixed-edge histogram over [lo, hi); values equal to hi land in the last bin,
/// values outside are tallied in `below` / `above`.
struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<std::size_t> counts;
    std::size_t below = 0;
    std::size_t above = 0;

    std::vector<double> edges() const {
        std::vector<double> e(counts.size() + 1);
        for (std::size_t i = 0; i < e.size(); ++i)
            e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(counts.size());
        return e;
    }
    std::size_t total() const {
        std::size_t t = below + above;
        for (auto c : counts) t += c;
        return t;
    }
};

inline Histogram make_histogram(const std::vector<double>& values, double lo, double hi,
                                std::size_t bins) {
    if (bins < 1 || !(hi > lo)) throw ArgumentError("make_histogram: bad range");
    Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), 0, 0};
    for (double v : values) {
        if (v < lo) {
            ++h.below;
        } else if (v > hi) {
            ++h.above;
        } else {
            auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
            ++h.counts[std::min(i, bins - 1)];
        }
    }
    return h;
}

struct PgdResult {
    Vector x_adv;
    double loss = 0.0;        // base-model loss at x_adv
    int base_prediction = 0;  // base-model class at x_adv
};

/// PGD-ℓ2 against the base DEQ: normalised gradient-ascent steps on the
/// cross-entropy, each projected back onto the ball of radius eps around x.
/// Input gradients pass through the fixed point via the adjoint. Returns the
/// highest-loss iterate.
inline PgdResult pgd_l2(const DeqModel& model, const SolverConfig& solver, const Vector& x,
                        int label, double eps, std::size_t steps = 20, double step_size = 0.1,
                        const AdjointConfig& adj = {}) {
    if (!(eps >= 0.0)) throw ArgumentError("pgd_l2: eps must be >= 0");
    auto evaluate = [&](const Vector& xa) {
        const SolverResult fwd = solve(model.cell, xa, Vector(model.hidden_dim), solver);
        const Vector lg = logits(model, fwd.z);
        return std::pair{fwd.z, lg};
    };

    auto [z0, lg0] = evaluate(x);
    PgdResult best{x, cross_entropy(lg0, label), classify(lg0)};
    if (eps == 0.0) return best;

    Vector xa = x;
    Vector z = z0;
    for (std::size_t s = 0; s < steps; ++s) {
        const ModelGradients g = grad_via_ift(model, xa, label, z, adj);
        const double gn = l2_norm(g.input);
        if (!(gn > 0.0)) break;
        xa.axpy(step_size / gn, g.input);
        Vector delta = xa - x;
        const double dn = l2_norm(delta);
        if (dn > eps) {
            delta *= eps / dn;
            xa = x + delta;
        }
        auto [zn, lg] = evaluate(xa);
        z = std::move(zn);
        const double loss = cross_entropy(lg, label);
        if (loss > best.loss) best = {xa, loss, classify(lg)};
    }
    return best;
}

/// Majority vote of the base DEQ over the point's noise stream.
inline int smoothed_vote(const DeqModel& model, const Vector& x, const SmoothingConfig& cfg,
                         const SolverConfig& solver, std::uint64_t point_index) {
    return top_two(mc_counts(model, x, cfg, solver, point_index)).first;
}

}  // namespace srsdeq
