#pragma once

// Gaussian-augmented training of the equilibrium model. Gradients flow through
// the fixed point by the implicit function theorem: with J = ∂f/∂z at z*, the
// adjoint u solves u = v + Jᵀu for v = ∂loss/∂z*.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "srsdeq/deq.hpp"
#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/solvers.hpp"
#include "srsdeq/stats.hpp"

namespace srsdeq {

struct Dataset {
    std::vector<Vector> inputs;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return inputs.size(); }
    std::size_t dim() const noexcept { return inputs.empty() ? 0 : inputs.front().size(); }

    void validate() const {
        if (inputs.size() != labels.size())
            throw ArgumentError("dataset: inputs and labels differ in length");
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            if (inputs[i].size() != dim())
                throw DimensionError("dataset: input " + std::to_string(i) + " has wrong dim");
            if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
                throw ArgumentError("dataset: label " + std::to_string(labels[i]) +
                                    " out of range at row " + std::to_string(i));
        }
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct AdjointConfig {
    std::size_t iters = 200;
    double tol = 1e-8;
};

struct TrainConfig {
    double sigma = 0.25;
    std::size_t epochs = 100;
    double lr = 0.1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    SolverConfig solver{SolverMethod::anderson, 1e-6, 100, 5, 1.0, 1e-4};
    AdjointConfig adjoint;

    void validate() const {
        if (!(sigma >= 0.0)) throw ArgumentError("train: sigma must be >= 0");
        if (epochs < 1) throw ArgumentError("train: epochs must be >= 1");
        if (!(lr >= 0.0)) throw ArgumentError("train: lr must be >= 0");
        if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
        if (adjoint.iters < 1 || !(adjoint.tol > 0.0))
            throw ArgumentError("train: adjoint settings must be positive");
        solver.validate();
    }
};

/// −log softmax(logits)[label], stabilised by subtracting the max logit.
inline double cross_entropy(const Vector& logit_vec, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logit_vec.size())
        throw ArgumentError("cross_entropy: label out of range");
    const double mx = *std::max_element(logit_vec.begin(), logit_vec.end());
    double s = 0.0;
    for (double v : logit_vec) s += std::exp(v - mx);
    return std::log(s) - (logit_vec[static_cast<std::size_t>(label)] - mx);
}

inline Vector softmax(const Vector& logit_vec) {
    const double mx = *std::max_element(logit_vec.begin(), logit_vec.end());
    std::vector<double> p(logit_vec.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logit_vec[i] - mx));
    for (double& v : p) v /= s;
    return Vector::unchecked(std::move(p));
}

struct ModelGradients {
    Matrix W, U, V;
    Vector b, c;
    Vector input;  // ∂loss/∂x, used by the attack
    double loss = 0.0;
    bool truncated = false;  // adjoint did not converge; u = v was used
    std::size_t adjoint_iters = 0;

    static ModelGradients zeros_like(const DeqModel& m) {
        ModelGradients g;
        g.W = Matrix(m.hidden_dim, m.hidden_dim);
        g.U = Matrix(m.hidden_dim, m.input_dim);
        g.V = Matrix(m.num_classes, m.hidden_dim);
        g.b = Vector(m.hidden_dim);
        g.c = Vector(m.num_classes);
        g.input = Vector(m.input_dim);
        return g;
    }
};

/// Parameter and input gradients of loss_scale · CE(logits(z*), label), with
/// z* the supplied fixed point for input x.
inline ModelGradients grad_via_ift(const DeqModel& model, const Vector& x, int label,
                                   const Vector& z_star, const AdjointConfig& adj = {},
                                   double loss_scale = 1.0) {
    const auto& cell = model.cell;
    const std::size_t h = model.hidden_dim;

    const Vector lg = logits(model, z_star);
    ModelGradients g = ModelGradients::zeros_like(model);
    g.loss = loss_scale * cross_entropy(lg, label);

    // dL/dlogits = p − e_y
    Vector dlogits = softmax(lg);
    dlogits[static_cast<std::size_t>(label)] -= 1.0;
    dlogits *= loss_scale;
    add_outer(g.V, 1.0, dlogits, z_star);
    g.c = dlogits;
    const Vector v = matvec_transposed(model.readout.V, dlogits);

    // tanh' at the pre-activation of f(z*, x)
    const Vector fz = cell_forward(cell, z_star, x);
    std::vector<double> dv(h);
    for (std::size_t i = 0; i < h; ++i) dv[i] = 1.0 - fz[i] * fz[i];
    const Vector d = Vector::unchecked(std::move(dv));

    auto jt_times = [&](const Vector& u) {
        Vector du = u;
        for (std::size_t i = 0; i < h; ++i) du[i] *= d[i];
        return matvec_transposed(cell.W, du);
    };

    Vector u = v;
    bool converged = false;
    for (std::size_t k = 1; k <= adj.iters; ++k) {
        Vector next = v + jt_times(u);
        const double delta = l2_norm(next - u);
        u = std::move(next);
        g.adjoint_iters = k;
        if (delta <= adj.tol * (l2_norm(u) + 1e-30)) {
            converged = true;
            break;
        }
    }
    if (!converged || !u.is_finite()) {
        u = v;
        g.truncated = true;
    }

    Vector q = u;
    for (std::size_t i = 0; i < h; ++i) q[i] *= d[i];
    add_outer(g.W, 1.0, q, z_star);
    add_outer(g.U, 1.0, q, x);
    g.b = q;
    g.input = matvec_transposed(cell.U, q);
    return g;
}

/// Solves the forward fixed point from zero and differentiates through it.
inline ModelGradients grad_via_ift(const DeqModel& model, const Vector& x, int label,
                                   const SolverConfig& solver, const AdjointConfig& adj = {},
                                   double loss_scale = 1.0) {
    const SolverResult fwd = solve(model.cell, x, Vector(model.hidden_dim), solver);
    return grad_via_ift(model, x, label, fwd.z, adj, loss_scale);
}

/// Clean-input loss of a model; the forward pass uses `solver` from z = 0.
inline double model_loss(const DeqModel& model, const Vector& x, int label,
                         const SolverConfig& solver) {
    const SolverResult fwd = solve(model.cell, x, Vector(model.hidden_dim), solver);
    return cross_entropy(logits(model, fwd.z), label);
}

inline int predict(const DeqModel& model, const Vector& x, const SolverConfig& solver) {
    const SolverResult fwd = solve(model.cell, x, Vector(model.hidden_dim), solver);
    return classify(logits(model, fwd.z));
}

inline double accuracy(const DeqModel& model, const Dataset& data, const SolverConfig& solver) {
    if (data.size() == 0) return 0.0;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (predict(model, data.inputs[i], solver) == data.labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(data.size());
}

struct LossRecord {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainResult {
    DeqModel model;
    std::vector<LossRecord> trace;      // one row per optimisation step
    std::vector<double> epoch_loss;     // mean step loss per epoch
    std::size_t truncated_adjoints = 0;
};

/// Minibatch SGD on the Gaussian-augmented cross-entropy. One fresh noise draw
/// per example per step; the cell is rescaled to a contraction after every
/// update.
inline TrainResult train(DeqModel model, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    validate_model(model);
    if (data.size() == 0) throw ArgumentError("train: empty dataset");
    if (data.dim() != model.input_dim) throw DimensionError("train: dataset dim != model input_dim");
    if (data.num_classes > model.num_classes)
        throw DimensionError("train: dataset has more classes than the model");

    const std::uint64_t noise_seed =
        CounterRng::mix(cfg.seed ^ (static_cast<std::uint64_t>(RngDomain::training) << 56));
    TrainResult out;
    std::vector<std::size_t> order(data.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng shuffle(cfg.seed, epoch, 0, static_cast<std::uint64_t>(RngDomain::shuffle));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.next_below(i)]);

        double epoch_sum = 0.0;
        std::size_t epoch_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            ModelGradients acc = ModelGradients::zeros_like(model);
            double loss = 0.0;
            for (std::size_t j = start; j < stop; ++j) {
                const std::size_t idx = order[j];
                Vector xn = data.inputs[idx];
                xn += gaussian_draw({noise_seed, step, idx}, model.input_dim, cfg.sigma);
                ModelGradients g;
                try {
                    const SolverResult fwd =
                        solve(model.cell, xn, Vector(model.hidden_dim), cfg.solver);
                    g = grad_via_ift(model, xn, data.labels[idx], fwd.z, cfg.adjoint, inv_b);
                } catch (const NumericalError& e) {
                    throw TrainingDiverged("train: step " + std::to_string(step) + ": " + e.what(),
                                           step);
                }
                if (g.truncated) ++out.truncated_adjoints;
                loss += g.loss;
                for (std::size_t k = 0; k < acc.W.values().size(); ++k)
                    acc.W.mutable_span()[k] += g.W.values()[k];
                for (std::size_t k = 0; k < acc.U.values().size(); ++k)
                    acc.U.mutable_span()[k] += g.U.values()[k];
                for (std::size_t k = 0; k < acc.V.values().size(); ++k)
                    acc.V.mutable_span()[k] += g.V.values()[k];
                acc.b += g.b;
                acc.c += g.c;
            }
            if (!std::isfinite(loss) || !acc.W.is_finite() || !acc.U.is_finite() ||
                !acc.V.is_finite() || !acc.b.is_finite() || !acc.c.is_finite())
                throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step),
                                       step);

            auto sgd = [&](std::span<double> p, std::span<const double> grad) {
                for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg.lr * grad[k];
            };
            sgd(model.cell.W.mutable_span(), acc.W.span());
            sgd(model.cell.U.mutable_span(), acc.U.span());
            sgd(std::span<double>(model.cell.b.data(), model.cell.b.size()), acc.b.span());
            sgd(model.readout.V.mutable_span(), acc.V.span());
            sgd(std::span<double>(model.readout.c.data(), model.readout.c.size()), acc.c.span());
            if (!model.cell.W.is_finite() || !model.cell.U.is_finite() ||
                !model.cell.b.is_finite() || !model.readout.V.is_finite() ||
                !model.readout.c.is_finite())
                throw TrainingDiverged(
                    "train: parameters became non-finite at step " + std::to_string(step), step);
            model.cell = rescale_to_contraction(std::move(model.cell));

            out.trace.push_back({epoch, step, loss});
            epoch_sum += loss;
            ++epoch_steps;
        }
        out.epoch_loss.push_back(epoch_sum / static_cast<double>(epoch_steps));
    }
    model.sigma_train = cfg.sigma;
    out.model = std::move(model);
    return out;
}

}  // namespace srsdeq
