#pragma once

// Standard randomized smoothing: every Monte Carlo sample is solved from a
// cold start, counted, and the top-class count is turned into a certified
// ℓ2 radius.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/parallel.hpp"
#include "srsdeq/solvers.hpp"
#include "srsdeq/stats.hpp"

namespace srsdeq {

struct SmoothingConfig {
    double sigma = 0.25;
    std::size_t n_samples = 10000;  // N
    std::size_t batch_size = 1000;  // B; the final batch may be short
    ConfidenceSpec confidence{0.001};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sigma > 0.0)) throw ArgumentError("smoothing sigma must be > 0");
        if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
        if (n_samples < batch_size) throw ArgumentError("n_samples must be >= batch_size");
    }

    std::size_t num_batches() const { return (n_samples + batch_size - 1) / batch_size; }
};

/// A single base-classifier decision and the solver work it cost.
struct BasePrediction {
    int label = 0;
    std::size_t iters = 0;
};

/// Base classifier backed by a cold-started DEQ solve.
struct DeqClassifier {
    const DeqModel* model;
    SolverConfig solver;

    BasePrediction operator()(const Vector& noisy) const {
        const SolverResult r =
            solve(model->cell, noisy, Vector(model->hidden_dim), solver);
        return {classify(logits(*model, r.z)), r.iters};
    }
};

struct SamplePredictions {
    std::vector<int> labels;  // one per sample index
    std::size_t total_iters = 0;
};

/// x + ε_i for sample i of the given point.
inline Vector noisy_sample(const Vector& x, const SmoothingConfig& cfg, std::uint64_t point_index,
                           std::uint64_t sample_index) {
    Vector out = x;
    out += gaussian_draw({cfg.seed, point_index, sample_index}, x.size(), cfg.sigma);
    return out;
}

/// Per-sample predictions of any base classifier over the point's noise stream.
/// Samples are independent, so `jobs` threads may evaluate them in any order.
template <class Classifier>
SamplePredictions mc_predictions(const Classifier& classify_fn, const Vector& x,
                                 const SmoothingConfig& cfg, std::uint64_t point_index,
                                 std::size_t jobs = 1) {
    cfg.validate();
    SamplePredictions out;
    out.labels.assign(cfg.n_samples, 0);
    std::vector<std::size_t> iters(cfg.n_samples, 0);
    try {
        parallel_for(cfg.n_samples, jobs, [&](std::size_t i) {
            const BasePrediction p = classify_fn(noisy_sample(x, cfg, point_index, i));
            out.labels[i] = p.label;
            iters[i] = p.iters;
        });
    } catch (const NumericalError& e) {
        throw CertificationFailed(std::string("Monte Carlo sampling failed: ") + e.what());
    }
    for (std::size_t v : iters) out.total_iters += v;
    return out;
}

inline std::vector<std::size_t> tally(const std::vector<int>& labels, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
            throw ArgumentError("tally: label " + std::to_string(l) + " out of range");
        ++counts[static_cast<std::size_t>(l)];
    }
    return counts;
}

inline std::vector<std::size_t> mc_counts(const DeqModel& model, const Vector& x,
                                          const SmoothingConfig& cfg, const SolverConfig& solver,
                                          std::uint64_t point_index = 0) {
    const DeqClassifier clf{&model, solver};
    return tally(mc_predictions(clf, x, cfg, point_index).labels, model.num_classes);
}

struct CertifyOutcome {
    int predicted = kAbstain;
    double radius = 0.0;
    double p_a_lower = 0.0;
    std::vector<std::size_t> counts;
    int top_class = 0;                 // c_A
    std::optional<int> runner_up;      // c_B, absent with a single class
    double wall_time = 0.0;            // seconds
    std::size_t total_solver_iters = 0;

    bool abstained() const noexcept { return predicted == kAbstain; }
};

/// Argmax of the counts (lowest index on ties) and the runner-up.
inline std::pair<int, std::optional<int>> top_two(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw ArgumentError("top_two: empty counts");
    std::size_t a = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
        if (counts[i] > counts[a]) a = i;
    std::optional<int> b;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i == a) continue;
        if (!b || counts[i] > counts[static_cast<std::size_t>(*b)]) b = static_cast<int>(i);
    }
    return {static_cast<int>(a), b};
}

/// σ·Φ⁻¹(p̲_A), or zero (abstain) when p̲_A ≤ 1/2.
inline double radius_from_lower_bound(double p_a_lower, double sigma) {
    if (p_a_lower <= 0.5) return 0.0;
    return sigma * inv_norm_cdf(p_a_lower);
}

/// Fills the decision fields of an outcome from a success count `k_a` for the
/// top class out of n trials.
inline void decide(CertifyOutcome& out, std::size_t k_a, std::size_t n, double sigma,
                   const ConfidenceSpec& conf) {
    out.p_a_lower = lower_conf_bound(k_a, n, conf.test_confidence());
    out.radius = radius_from_lower_bound(out.p_a_lower, sigma);
    out.predicted = out.p_a_lower > 0.5 ? out.top_class : kAbstain;
    if (out.predicted == kAbstain) out.radius = 0.0;
}

/// Certification from per-sample labels (one-sided radius at budget α̃).
inline CertifyOutcome certify_from_labels(const std::vector<int>& labels, std::size_t num_classes,
                                          double sigma, const ConfidenceSpec& conf) {
    CertifyOutcome out;
    out.counts = tally(labels, num_classes);
    const auto [a, b] = top_two(out.counts);
    out.top_class = a;
    out.runner_up = b;
    decide(out, out.counts[static_cast<std::size_t>(a)], labels.size(), sigma, conf);
    return out;
}

template <class Classifier>
CertifyOutcome certify_standard_with(const Classifier& clf, std::size_t num_classes,
                                     const Vector& x, const SmoothingConfig& cfg,
                                     std::uint64_t point_index = 0, std::size_t jobs = 1) {
    const auto t0 = std::chrono::steady_clock::now();
    const SamplePredictions preds = mc_predictions(clf, x, cfg, point_index, jobs);
    CertifyOutcome out = certify_from_labels(preds.labels, num_classes, cfg.sigma, cfg.confidence);
    out.total_solver_iters = preds.total_iters;
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Standard randomized-smoothing certificate for the DEQ at x.
inline CertifyOutcome certify_standard(const DeqModel& model, const Vector& x,
                                       const SmoothingConfig& cfg, const SolverConfig& solver,
                                       std::uint64_t point_index = 0, std::size_t jobs = 1) {
    return certify_standard_with(DeqClassifier{&model, solver}, model.num_classes, x, cfg,
                                 point_index, jobs);
}

/// R = σ/2 · (Φ⁻¹(p̲_A) − Φ⁻¹(p̄_B)).
inline double radius_two_sided(double p_a_lower, double p_b_upper, double sigma) {
    if (!(p_b_upper > 0.0 && p_b_upper <= p_a_lower && p_a_lower < 1.0))
        throw ArgumentError("radius_two_sided: need 0 < p_b_upper <= p_a_lower < 1");
    if (p_a_lower == p_b_upper) return 0.0;
    return 0.5 * sigma * (inv_norm_cdf(p_a_lower) - inv_norm_cdf(p_b_upper));
}

}  // namespace srsdeq
