#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "srsdeq/data.hpp"
#include "srsdeq/training.hpp"
#include "test_util.hpp"

using namespace srsdeq;

namespace {

const SolverConfig kTight{SolverMethod::anderson, 1e-13, 500, 5, 1.0, 1e-10};

double loss_at(const DeqModel& m, const Vector& x, int label) {
    return model_loss(m, x, label, kTight);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7});
}

// Central differences over every entry of a parameter block.
double max_fd_error(DeqModel m, const Vector& x, int label, std::span<double> (*block)(DeqModel&),
                    std::span<const double> analytic) {
    const double h = 1e-5;
    double worst = 0.0;
    std::span<double> p = block(m);
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double keep = p[k];
        p[k] = keep + h;
        const double up = loss_at(m, x, label);
        p[k] = keep - h;
        const double dn = loss_at(m, x, label);
        p[k] = keep;
        worst = std::max(worst, rel_err((up - dn) / (2 * h), analytic[k]));
    }
    return worst;
}

std::span<double> block_w(DeqModel& m) { return m.cell.W.mutable_span(); }
std::span<double> block_u(DeqModel& m) { return m.cell.U.mutable_span(); }
std::span<double> block_v(DeqModel& m) { return m.readout.V.mutable_span(); }
std::span<double> block_b(DeqModel& m) { return {m.cell.b.data(), m.cell.b.size()}; }
std::span<double> block_c(DeqModel& m) { return {m.readout.c.data(), m.readout.c.size()}; }

Dataset blobs(std::size_t n, std::uint64_t seed) {
    DataSpec s;
    s.kind = DataKind::blobs;
    s.n_points = n;
    s.noise = 0.5;
    s.separation = 8 * 0.5;
    s.seed = seed;
    return gen_data(s);
}

}  // namespace

TEST(CrossEntropy, Examples) {
    EXPECT_NEAR(cross_entropy(Vector({0.3, 0.3, 0.3, 0.3}), 2), std::log(4.0), 1e-15);
    EXPECT_NEAR(cross_entropy(Vector({1000, 0}), 0), 0.0, 1e-300);
    EXPECT_NEAR(cross_entropy(Vector({1000, 0}), 1), 1000.0, 1e-12);
    EXPECT_THROW(cross_entropy(Vector({1, 2}), 2), ArgumentError);
}

TEST(CrossEntropy, MatchesLongDoubleReference) {
    std::mt19937_64 g(3);
    for (int t = 0; t < 200; ++t) {
        const Vector l = testutil::random_vector(g, 5, 4.0);
        const int y = t % 5;
        long double s = 0;
        for (double v : l) s += std::exp(static_cast<long double>(v));
        const long double ref = std::log(s) - static_cast<long double>(l[y]);
        EXPECT_NEAR(cross_entropy(l, y), static_cast<double>(ref), 1e-13);
    }
}

TEST(GradViaIft, ZeroWEqualsDirectBackprop) {
    DeqModel m = make_random_model(4, 3, 3, 0.9, 2);
    m.cell.W = Matrix(4, 4);
    const Vector x({0.5, -1.0, 0.25});
    const Vector z = cell_forward(m.cell, Vector(4), x);
    const ModelGradients g = grad_via_ift(m, x, 1, z);
    EXPECT_FALSE(g.truncated);
    // One tanh layer by hand: dL/dpre = (1 − z²) ⊙ Vᵀ(p − e_y).
    Vector p = softmax(logits(m, z));
    p[1] -= 1.0;
    const Vector v = matvec_transposed(m.readout.V, p);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(g.b[i], (1 - z[i] * z[i]) * v[i], 1e-15);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(g.W(i, j), g.b[i] * z[j], 1e-15);
}

TEST(GradViaIft, MatchesFiniteDifferences) {
    std::mt19937_64 g(19);
    const AdjointConfig adj{500, 1e-12};
    for (int t = 0; t < 5; ++t) {
        const DeqModel m = make_random_model(4, 3, 3, 0.9, 300 + t);
        const Vector x = testutil::random_vector(g, 3, 1.5);
        const int y = t % 3;
        const ModelGradients gr = grad_via_ift(m, x, y, kTight, adj);
        ASSERT_FALSE(gr.truncated);
        EXPECT_LE(max_fd_error(m, x, y, block_w, gr.W.span()), 1e-4);
        EXPECT_LE(max_fd_error(m, x, y, block_u, gr.U.span()), 1e-4);
        EXPECT_LE(max_fd_error(m, x, y, block_v, gr.V.span()), 1e-4);
        EXPECT_LE(max_fd_error(m, x, y, block_b, gr.b.span()), 1e-4);
        EXPECT_LE(max_fd_error(m, x, y, block_c, gr.c.span()), 1e-4);
    }
}

TEST(GradViaIft, InputGradientMatchesFiniteDifferences) {
    const DeqModel m = make_random_model(6, 2, 2, 0.9, 8);
    const Vector x({0.7, -0.2});
    const ModelGradients gr = grad_via_ift(m, x, 0, kTight, AdjointConfig{500, 1e-12});
    for (std::size_t k = 0; k < 2; ++k) {
        Vector up = x, dn = x;
        up[k] += 1e-5;
        dn[k] -= 1e-5;
        const double fd = (loss_at(m, up, 0) - loss_at(m, dn, 0)) / 2e-5;
        EXPECT_LE(rel_err(fd, gr.input[k]), 1e-4);
    }
}

TEST(GradViaIft, ScalesLinearlyWithLoss) {
    const DeqModel m = make_random_model(5, 2, 2, 0.9, 4);
    const Vector x({1.0, 0.5});
    const auto g1 = grad_via_ift(m, x, 1, kTight, AdjointConfig{}, 1.0);
    const auto g2 = grad_via_ift(m, x, 1, kTight, AdjointConfig{}, 2.0);
    auto check = [](std::span<const double> a, std::span<const double> b) {
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b[i], 2 * a[i], 1e-10);
    };
    check(g1.W.span(), g2.W.span());
    check(g1.U.span(), g2.U.span());
    check(g1.V.span(), g2.V.span());
    check(g1.b.span(), g2.b.span());
    check(g1.c.span(), g2.c.span());
    EXPECT_NEAR(g2.loss, 2 * g1.loss, 1e-12);
}

TEST(GradViaIft, NonConvergedAdjointFallsBackToTruncated) {
    const DeqModel m = make_random_model(5, 2, 2, 0.9, 4);
    const Vector x({1.0, 0.5});
    const auto full = grad_via_ift(m, x, 1, kTight, AdjointConfig{1, 1e-300});
    EXPECT_TRUE(full.truncated);
    // Truncated gradient equals the W = 0 formula applied at z*.
    const Vector z = solve(m.cell, x, Vector(5), kTight).z;
    Vector p = softmax(logits(m, z));
    p[1] -= 1.0;
    const Vector v = matvec_transposed(m.readout.V, p);
    const Vector fz = cell_forward(m.cell, z, x);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(full.b[i], (1 - fz[i] * fz[i]) * v[i], 1e-15);
}

TEST(Train, ZeroLearningRateLeavesParametersUntouched) {
    const DeqModel m = make_random_model(6, 2, 2, 0.9, 10);
    TrainConfig cfg;
    cfg.lr = 0.0;
    cfg.epochs = 2;
    const auto r = train(m, blobs(40, 1), cfg);
    EXPECT_EQ(r.model.cell, m.cell);
    EXPECT_EQ(r.model.readout, m.readout);
}

TEST(Train, SeedDeterministic) {
    const DeqModel m = make_random_model(6, 2, 2, 0.9, 10);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.sigma = 0.3;
    cfg.seed = 5;
    const auto a = train(m, blobs(60, 2), cfg);
    const auto b = train(m, blobs(60, 2), cfg);
    ASSERT_EQ(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) EXPECT_EQ(a.trace[i].loss, b.trace[i].loss);
    EXPECT_EQ(a.model, b.model);
    cfg.seed = 6;
    EXPECT_NE(train(m, blobs(60, 2), cfg).model, a.model);
}

TEST(Train, SeparableBlobsReachHighAccuracyAndStayContractive) {
    const Dataset d = blobs(200, 3);
    TrainConfig cfg;
    cfg.sigma = 0.0;
    cfg.epochs = 200;
    cfg.lr = 0.1;
    cfg.batch_size = 20;
    const auto r = train(make_random_model(8, 2, 2, 0.9, 1), d, cfg);
    EXPECT_GE(accuracy(r.model, d, SolverConfig{}), 0.95);
    EXPECT_LE(spectral_norm_estimate(r.model.cell.W, 1000), 0.9 + 1e-3);
    EXPECT_EQ(r.model.sigma_train, 0.0);
    for (const auto& rec : r.trace) EXPECT_TRUE(std::isfinite(rec.loss));
    EXPECT_LT(r.epoch_loss.back(), r.epoch_loss.front());
}

TEST(Train, DivergenceIsReported) {
    // Readout weights near the double limit overflow the logits to inf.
    DeqModel m;
    m.hidden_dim = 2;
    m.input_dim = 2;
    m.num_classes = 2;
    m.cell = {Matrix(2, 2), Matrix::identity(2), Vector(2), 0.9};
    m.readout = {Matrix(2, 2, 1e308), Vector(2)};
    Dataset d{{Vector({5.0, 5.0}), Vector({6.0, 6.0})}, {0, 1}, 2};
    TrainConfig cfg;
    cfg.sigma = 0.0;
    cfg.epochs = 3;
    try {
        train(m, d, cfg);
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.step(), 0u);
    }
}

TEST(Train, RejectsBadInputs) {
    const DeqModel m = make_random_model(4, 3, 2, 0.9, 1);
    TrainConfig cfg;
    EXPECT_THROW(train(m, blobs(20, 1), cfg), DimensionError);
    cfg.epochs = 0;
    EXPECT_THROW(train(make_random_model(4, 2, 2, 0.9, 1), blobs(20, 1), cfg), ArgumentError);
    Dataset bad = blobs(20, 1);
    bad.labels[0] = 7;
    EXPECT_THROW(train(make_random_model(4, 2, 2, 0.9, 1), bad, TrainConfig{}), ArgumentError);
}
