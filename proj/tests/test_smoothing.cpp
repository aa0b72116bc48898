#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "srsdeq/smoothing.hpp"
#include "srsdeq/training.hpp"
#include "test_util.hpp"

using namespace srsdeq;

namespace {

// Halfspace base classifier 1{w·x + b > 0}, bypassing the DEQ.
struct Halfspace {
    Vector w;
    double b = 0.0;
    BasePrediction operator()(const Vector& x) const { return {dot(w, x) + b > 0.0 ? 1 : 0, 0}; }
};

DeqModel constant_model(int cls) {
    DeqModel m = make_random_model(4, 2, 3, 0.9, 1);
    m.readout.V = Matrix(3, 4);
    m.readout.c = Vector(3);
    m.readout.c[static_cast<std::size_t>(cls)] = 1.0;
    return m;
}

SmoothingConfig smoothing(double sigma, std::size_t n, std::size_t b, std::uint64_t seed = 0) {
    SmoothingConfig c;
    c.sigma = sigma;
    c.n_samples = n;
    c.batch_size = b;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(McCounts, ConstantClassifier) {
    const auto counts = mc_counts(constant_model(0), Vector({0.3, 1.0}), smoothing(0.5, 500, 100),
                                  SolverConfig{});
    EXPECT_EQ(counts, (std::vector<std::size_t>{500, 0, 0}));
}

TEST(McCounts, VanishingNoiseFollowsCleanPrediction) {
    const DeqModel m = make_random_model(8, 2, 3, 0.9, 6);
    const Vector x({0.4, -0.9});
    const int clean = predict(m, x, SolverConfig{});
    const auto counts = mc_counts(m, x, smoothing(1e-12, 200, 50), SolverConfig{});
    EXPECT_EQ(counts[static_cast<std::size_t>(clean)], 200u);
}

TEST(McCounts, HalfspaceFrequencyMatchesClosedForm) {
    const Halfspace h{Vector({1.0, 0.0}), 0.0};
    const Vector x({0.3, 0.0});
    const auto cfg = smoothing(0.5, 20000, 1000, 3);
    const auto preds = mc_predictions(h, x, cfg, 0);
    const auto counts = tally(preds.labels, 2);
    const double p = norm_cdf(0.3 / 0.5);
    const double freq = static_cast<double>(counts[1]) / 20000.0;
    EXPECT_LE(std::abs(freq - p), 3 * std::sqrt(p * (1 - p) / 20000.0));
}

TEST(McCounts, BatchSizeAndThreadsDoNotChangeCounts) {
    const DeqModel m = make_random_model(6, 2, 2, 0.9, 2);
    const Vector x({0.1, 0.2});
    const auto a = mc_counts(m, x, smoothing(0.5, 1000, 10), SolverConfig{}, 4);
    const auto b = mc_counts(m, x, smoothing(0.5, 1000, 1000), SolverConfig{}, 4);
    EXPECT_EQ(a, b);
    const auto c = certify_standard(m, x, smoothing(0.5, 1000, 1000), SolverConfig{}, 4, 3);
    EXPECT_EQ(c.counts, a);
}

TEST(McCounts, NumericalFailureBecomesCertificationFailed) {
    DeqModel m;
    m.hidden_dim = 1;
    m.input_dim = 2;
    m.num_classes = 2;
    m.cell = {Matrix(1, 1), Matrix{{10.0, 10.0}}, Vector(1), 0.9};
    m.readout = {Matrix(2, 1), Vector(2)};
    EXPECT_THROW(mc_counts(m, Vector({1e308, -1e308}), smoothing(1e-300, 10, 10), SolverConfig{}),
                 CertificationFailed);
}

TEST(CertifyStandard, UnanimousCountsClosedForm) {
    const auto cfg = smoothing(0.5, 1000, 100);
    const auto out = certify_standard(constant_model(2), Vector({0, 0}), cfg, SolverConfig{});
    EXPECT_EQ(out.predicted, 2);
    const double lb = lower_conf_bound(1000, 1000, 1 - 0.0005);
    EXPECT_EQ(out.p_a_lower, lb);
    EXPECT_DOUBLE_EQ(out.radius, 0.5 * inv_norm_cdf(lb));
    EXPECT_NEAR(lb, std::pow(0.0005, 1.0 / 1000), 1e-10);
}

TEST(CertifyStandard, EvenSplitAbstains) {
    std::vector<int> labels(1000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 2);
    const auto out = certify_from_labels(labels, 2, 0.25, ConfidenceSpec(0.001));
    EXPECT_EQ(out.predicted, kAbstain);
    EXPECT_EQ(out.radius, 0.0);
    EXPECT_EQ(out.top_class, 0);
    EXPECT_EQ(out.runner_up, 1);
}

TEST(CertifyStandard, HalfspaceRadius) {
    const Halfspace h{Vector({1.0, 0.0}), 0.0};
    const auto out = certify_standard_with(h, 2, Vector({0.3, 0.0}), smoothing(0.5, 100000, 1000));
    EXPECT_EQ(out.predicted, 1);
    EXPECT_NEAR(out.radius, 0.30, 0.02);
}

TEST(CertifyStandard, RadiusBelowPointEstimateAndDeterministic) {
    const DeqModel m = make_random_model(8, 2, 3, 0.9, 7);
    std::mt19937_64 g(1);
    for (int t = 0; t < 10; ++t) {
        const Vector x = testutil::random_vector(g, 2, 2.0);
        const auto cfg = smoothing(0.25, 400, 100, 9);
        const auto a = certify_standard(m, x, cfg, SolverConfig{}, t);
        const auto b = certify_standard(m, x, cfg, SolverConfig{}, t);
        EXPECT_EQ(a.counts, b.counts);
        EXPECT_EQ(a.radius, b.radius);
        std::size_t total = 0;
        for (auto c : a.counts) total += c;
        EXPECT_EQ(total, 400u);
        const double pa = static_cast<double>(a.counts[static_cast<std::size_t>(a.top_class)]) / 400;
        if (pa < 1.0) EXPECT_LE(a.radius, 0.25 * inv_norm_cdf(pa));
        if (a.radius > 0) EXPECT_NE(a.predicted, kAbstain);
    }
}

TEST(CertifyStandard, ConfigValidation) {
    EXPECT_THROW(smoothing(0.0, 10, 10).validate(), ArgumentError);
    EXPECT_THROW(smoothing(0.5, 10, 20).validate(), ArgumentError);
    EXPECT_THROW(smoothing(0.5, 10, 0).validate(), ArgumentError);
    EXPECT_EQ(smoothing(0.5, 1001, 100).num_batches(), 11u);
}

TEST(TopTwo, LowestIndexWinsTies) {
    EXPECT_EQ(top_two({3, 5, 5}).first, 1);
    EXPECT_EQ(top_two({3, 5, 5}).second, 2);
    EXPECT_EQ(top_two({4}).second, std::nullopt);
    EXPECT_EQ(top_two({0, 0}).first, 0);
}

TEST(RadiusTwoSided, Examples) {
    EXPECT_NEAR(radius_two_sided(0.9, 0.1, 1.0), 1.2815515655, 1e-9);
    EXPECT_EQ(radius_two_sided(0.6, 0.6, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(radius_two_sided(0.8, 0.15, 2.0), 2 * radius_two_sided(0.8, 0.15, 1.0));
    EXPECT_DOUBLE_EQ(radius_two_sided(0.83, 0.17, 0.5), 0.5 * inv_norm_cdf(0.83));
    EXPECT_THROW(radius_two_sided(0.5, 0.6, 1.0), ArgumentError);
    EXPECT_THROW(radius_two_sided(1.0, 0.0, 1.0), ArgumentError);
}
