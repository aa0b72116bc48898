#pragma once

// Serialized randomized smoothing. Monte Carlo batches are solved with a small
// iteration budget, each warm-started from the previous batch's fixed points.
// The warm starts correlate the predictions, so the certificate discounts the
// top-class count by an upper confidence bound p̄_m on the rate at which a
// serialized prediction of c_A disagrees with the full reference solver,
// estimated on K held-out samples.
//
// Confidence budget: the holdout test and the final bound each run at
// α̃ = α/2, so by a union bound the certificate holds with probability 1 − α.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/parallel.hpp"
#include "srsdeq/smoothing.hpp"
#include "srsdeq/solvers.hpp"
#include "srsdeq/stats.hpp"

namespace srsdeq {

struct SrsConfig {
    SmoothingConfig base;
    std::size_t srs_steps = 3;          // S, per-batch iteration cap
    std::size_t warmup_steps = 30;      // cap for the first batch and restarts
    std::size_t restart_interval = 10;  // re-warm every K_r batches; 0 = never
    std::size_t holdout_k = 1000;       // K
    SolverConfig reference_solver;      // full-budget solver defining Y_g
    bool start_from_clean = false;      // warm-start every batch from z*(x) instead
    bool record_predictions = false;    // keep all N serialized predictions

    void validate() const {
        base.validate();
        reference_solver.validate();
        if (srs_steps < 1) throw ArgumentError("srs_steps must be >= 1");
        if (warmup_steps < srs_steps) throw ArgumentError("warmup_steps must be >= srs_steps");
        if (holdout_k < 1) throw ArgumentError("holdout_k must be >= 1");
        if (holdout_k > base.n_samples)
            throw ArgumentError("holdout_k (" + std::to_string(holdout_k) +
                                ") exceeds n_samples (" + std::to_string(base.n_samples) + ")");
    }

    SolverConfig solver_with_budget(std::size_t steps) const {
        SolverConfig s = reference_solver;
        s.max_iters = steps;
        return s;
    }
};

/// Fixed points carried from one batch to the next, one per lane.
struct SrsState {
    std::vector<Vector> prev_z_batch;
    std::size_t batches_done = 0;

    static SrsState zeros(std::size_t lanes, std::size_t hidden_dim) {
        return {std::vector<Vector>(lanes, Vector(hidden_dim)), 0};
    }
};

struct HoldoutRecord {
    std::vector<Vector> x_m;                 // held-out noisy inputs X_m
    std::vector<int> y_m;                    // serialized predictions Y_m
    std::vector<int> y_g;                    // reference predictions Y_g
    std::vector<std::size_t> sample_index;   // position of each sample in the stream
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    double pm_upper = 1.0;
};

struct SrsOutcome : CertifyOutcome {
    std::size_t n_a = 0;              // N_A
    std::size_t n_a_effective = 0;    // N_A^E
    double pm_upper = 1.0;            // p̄_m
    HoldoutRecord holdout;
    std::int64_t iters_saved = 0;     // N·L_ref − total_solver_iters
    std::size_t sampling_iters = 0;   // solver iterations spent on the N samples
    std::size_t holdout_iters = 0;    // reference iterations spent on the K holdouts
    std::vector<int> sample_predictions;  // filled when record_predictions is set
    std::vector<double> sample_residuals; // final residual per sample, same condition
};

struct BatchSolveOutput {
    std::vector<Vector> fixed_points;
    std::vector<double> residuals;
    std::vector<std::size_t> iters;
};

/// Solves lane i of the batch from state.prev_z_batch[i] with an iteration cap
/// of `steps`, then stores the new fixed points back into the state. A short
/// final batch uses the leading lanes only.
inline BatchSolveOutput warm_start_solve_batch(const DeqCellParams& cell,
                                               const std::vector<Vector>& noisy_batch,
                                               SrsState& state, std::size_t steps,
                                               const SolverConfig& solver, std::size_t jobs = 1) {
    if (noisy_batch.size() > state.prev_z_batch.size())
        throw DimensionError("warm_start_solve_batch: " + std::to_string(noisy_batch.size()) +
                             " lanes but state holds " +
                             std::to_string(state.prev_z_batch.size()));
    SolverConfig cfg = solver;
    cfg.max_iters = steps;
    const std::vector<Vector> z0s(state.prev_z_batch.begin(),
                                  state.prev_z_batch.begin() +
                                      static_cast<std::ptrdiff_t>(noisy_batch.size()));
    const std::vector<SolverResult> results = solve_batch(cell, noisy_batch, z0s, cfg, jobs);

    BatchSolveOutput out;
    out.fixed_points.reserve(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        out.fixed_points.push_back(results[i].z);
        out.residuals.push_back(results[i].residual);
        out.iters.push_back(results[i].iters);
        state.prev_z_batch[i] = results[i].z;
    }
    ++state.batches_done;
    return out;
}

/// (N₁, N₂): holdouts agreeing with the reference on c_A, and holdouts the
/// serialized solver assigned to c_A.
inline std::pair<std::size_t, std::size_t> holdout_counts(const HoldoutRecord& r, int c_a) {
    if (r.y_m.size() != r.y_g.size()) throw ArgumentError("holdout record is not finalized");
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    for (std::size_t i = 0; i < r.y_m.size(); ++i) {
        if (r.y_m[i] == r.y_g[i] && r.y_g[i] == c_a) ++n1;
        if (r.y_m[i] == c_a) ++n2;
    }
    return {n1, n2};
}

/// p̄_m = 1 − LowerConfBound(N₁, N₂, 1 − α̃); 1 when no holdout was assigned to c_A.
inline double estimate_pm_upper(const HoldoutRecord& r, int c_a, const ConfidenceSpec& conf) {
    const auto [n1, n2] = holdout_counts(r, c_a);
    if (n2 == 0) return 1.0;
    return 1.0 - lower_conf_bound(n1, n2, conf.test_confidence());
}

/// N_A^E = floor(N_A · (1 − p̄_m)).
inline std::size_t effective_count(std::size_t n_a, double pm_upper) {
    if (!(pm_upper >= 0.0 && pm_upper <= 1.0))
        throw ArgumentError("effective_count: pm_upper must lie in [0,1]");
    return static_cast<std::size_t>(std::floor(static_cast<double>(n_a) * (1.0 - pm_upper)));
}

struct CutoffRadius {
    double r_base = 0.0;
    double r_srs = 0.0;
};

/// Largest certifiable radius when a fraction `ratio` of N samples hit the top
/// class, for standard smoothing and for the serialized certificate whose
/// holdout check passed on all K samples.
inline CutoffRadius cutoff_radius(double ratio, std::size_t n, std::size_t k_holdout,
                                  double alpha, double sigma) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ArgumentError("cutoff_radius: ratio must be in (0,1]");
    if (n < 1 || k_holdout < 1) throw ArgumentError("cutoff_radius: n and k must be >= 1");
    const ConfidenceSpec conf(alpha);
    const double nd = static_cast<double>(n);
    const auto k_base = static_cast<std::size_t>(std::llround(nd * ratio));
    const double pm = 1.0 - lower_conf_bound(k_holdout, k_holdout, conf.test_confidence());
    const auto k_srs = static_cast<std::size_t>(std::floor((1.0 - pm) * nd * ratio));
    CutoffRadius out;
    out.r_base = radius_from_lower_bound(lower_conf_bound(k_base, n, conf.test_confidence()), sigma);
    out.r_srs = radius_from_lower_bound(lower_conf_bound(k_srs, n, conf.test_confidence()), sigma);
    return out;
}

/// Serialized certification of one point.
inline SrsOutcome srs_certify(const DeqModel& model, const Vector& x, const SrsConfig& cfg,
                              std::uint64_t point_index = 0, std::size_t jobs = 1) {
    cfg.validate();
    validate_model(model);
    const auto t0 = std::chrono::steady_clock::now();
    const SmoothingConfig& base = cfg.base;
    const std::size_t n = base.n_samples;
    const std::size_t bsz = base.batch_size;
    const std::size_t k = cfg.holdout_k;
    const std::size_t hd = model.hidden_dim;
    const SolverConfig& ref = cfg.reference_solver;

    SrsOutcome out;
    out.counts.assign(model.num_classes, 0);
    out.holdout.x_m.reserve(k);
    if (cfg.record_predictions) {
        out.sample_predictions.reserve(n);
        out.sample_residuals.reserve(n);
    }

    try {
        Vector z_clean(hd);
        if (cfg.start_from_clean) {
            const SolverResult r = solve(model.cell, x, Vector(hd), ref);
            z_clean = r.z;
            out.sampling_iters += r.iters;
        }

        SrsState state = SrsState::zeros(bsz, hd);
        for (std::size_t b = 0; b < base.num_batches(); ++b) {
            const std::size_t first = b * bsz;
            const std::size_t lanes = std::min(bsz, n - first);
            std::vector<Vector> batch;
            batch.reserve(lanes);
            for (std::size_t l = 0; l < lanes; ++l)
                batch.push_back(noisy_sample(x, base, point_index, first + l));

            std::size_t steps = cfg.srs_steps;
            if (cfg.start_from_clean) {
                for (auto& z : state.prev_z_batch) z = z_clean;
            } else if (b == 0 || (cfg.restart_interval > 0 && b % cfg.restart_interval == 0)) {
                for (auto& z : state.prev_z_batch) z = Vector(hd);
                steps = cfg.warmup_steps;
            }

            const BatchSolveOutput solved =
                warm_start_solve_batch(model.cell, batch, state, steps, ref, jobs);

            for (std::size_t l = 0; l < lanes; ++l) {
                const std::size_t i = first + l;
                const int label = classify(logits(model, solved.fixed_points[l]));
                ++out.counts[static_cast<std::size_t>(label)];
                out.sampling_iters += solved.iters[l];
                if (cfg.record_predictions) {
                    out.sample_predictions.push_back(label);
                    out.sample_residuals.push_back(solved.residuals[l]);
                }
                // Reservoir sampling keeps a uniform K-subset of all samples seen.
                std::size_t slot = k;
                if (i < k) {
                    slot = i;
                    out.holdout.x_m.emplace_back();
                    out.holdout.y_m.push_back(0);
                    out.holdout.sample_index.push_back(0);
                } else {
                    CounterRng rng(base.seed, point_index, i,
                                   static_cast<std::uint64_t>(RngDomain::reservoir));
                    const std::uint64_t j = rng.next_below(i + 1);
                    if (j < k) slot = static_cast<std::size_t>(j);
                }
                if (slot < k) {
                    out.holdout.x_m[slot] = batch[l];
                    out.holdout.y_m[slot] = label;
                    out.holdout.sample_index[slot] = i;
                }
            }
        }

        // Reference predictions for the held-out samples.
        std::vector<int> y_g(k, 0);
        std::vector<std::size_t> hold_iters(k, 0);
        parallel_for(k, jobs, [&](std::size_t h) {
            const SolverResult r = solve(model.cell, out.holdout.x_m[h], Vector(hd), ref);
            y_g[h] = classify(logits(model, r.z));
            hold_iters[h] = r.iters;
        });
        out.holdout.y_g = std::move(y_g);
        for (std::size_t v : hold_iters) out.holdout_iters += v;
    } catch (const NumericalError& e) {
        throw CertificationFailed(std::string("serialized certification failed: ") + e.what());
    }

    const auto [a, b] = top_two(out.counts);
    out.top_class = a;
    out.runner_up = b;
    const auto [n1, n2] = holdout_counts(out.holdout, a);
    out.holdout.n1 = n1;
    out.holdout.n2 = n2;
    out.pm_upper = estimate_pm_upper(out.holdout, a, base.confidence);
    out.holdout.pm_upper = out.pm_upper;
    out.n_a = out.counts[static_cast<std::size_t>(a)];
    out.n_a_effective = effective_count(out.n_a, out.pm_upper);
    decide(out, out.n_a_effective, n, base.sigma, base.confidence);

    out.total_solver_iters = out.sampling_iters + out.holdout_iters;
    out.iters_saved = static_cast<std::int64_t>(n * ref.max_iters) -
                      static_cast<std::int64_t>(out.total_solver_iters);
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace srsdeq
