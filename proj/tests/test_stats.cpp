#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <random>
#include <set>
#include <thread>

#include "srsdeq/stats.hpp"

using namespace srsdeq;

namespace {

// Clopper–Pearson lower bound as the alpha quantile of Beta(k, n−k+1).
double beta_oracle(std::uint64_t k, std::uint64_t n, double confidence) {
    if (k == 0) return 0.0;
    boost::math::beta_distribution<double> b(static_cast<double>(k), static_cast<double>(n - k + 1));
    return boost::math::quantile(b, 1.0 - confidence);
}

}  // namespace

TEST(ConfidenceSpec, HalvesAlpha) {
    const ConfidenceSpec c(0.001);
    EXPECT_EQ(c.alpha_tilde(), 0.0005);
    EXPECT_EQ(c.test_confidence(), 1.0 - 0.0005);
    EXPECT_THROW(ConfidenceSpec(0.0), ArgumentError);
    EXPECT_THROW(ConfidenceSpec(1.0), ArgumentError);
}

TEST(LowerConfBound, Examples) {
    EXPECT_EQ(lower_conf_bound(0, 100, 0.999), 0.0);
    EXPECT_NEAR(lower_conf_bound(10000, 10000, 0.9995), std::pow(0.0005, 1.0 / 10000), 1e-9);
    EXPECT_NEAR(lower_conf_bound(10000, 10000, 0.9995), 0.9992402, 1e-6);
    EXPECT_NEAR(lower_conf_bound(5, 10, 0.95), 0.2224, 5e-4);
}

TEST(LowerConfBound, MatchesBetaQuantile) {
    const std::uint64_t ns[] = {1, 7, 50, 1000, 100000};
    const double confs[] = {0.9, 0.95, 0.999, 0.9995};
    for (auto n : ns)
        for (double c : confs)
            for (std::uint64_t k : {std::uint64_t{1}, n / 3, n / 2, (9 * n) / 10, n - 1, n}) {
                if (k == 0 || k > n) continue;
                EXPECT_NEAR(lower_conf_bound(k, n, c), beta_oracle(k, n, c), 1e-9)
                    << "k=" << k << " n=" << n << " c=" << c;
            }
}

TEST(LowerConfBound, Errors) {
    EXPECT_THROW(lower_conf_bound(1, 0, 0.9), ArgumentError);
    EXPECT_THROW(lower_conf_bound(5, 4, 0.9), ArgumentError);
    EXPECT_THROW(lower_conf_bound(1, 4, 1.0), ArgumentError);
    EXPECT_THROW(lower_conf_bound(1, 4, 0.0), ArgumentError);
}

TEST(LowerConfBound, MonotoneAndBelowPointEstimate) {
    const std::uint64_t n = 200;
    double prev = -1.0;
    for (std::uint64_t k = 0; k <= n; ++k) {
        const double lb = lower_conf_bound(k, n, 0.999);
        EXPECT_GE(lb, prev);
        EXPECT_LE(lb, static_cast<double>(k) / n);
        prev = lb;
    }
    double prev_c = 2.0;
    for (double c : {0.5, 0.8, 0.9, 0.99, 0.999, 0.99999}) {
        const double lb = lower_conf_bound(137, 200, c);
        EXPECT_LE(lb, prev_c);
        prev_c = lb;
    }
}

TEST(LowerConfBound, CoverageSmall) {
    // Lighter twin of the acceptance check: 2,000 experiments, n=50.
    std::mt19937_64 g(2024);
    const double alpha = 0.05;
    for (double p : {0.5, 0.9}) {
        std::binomial_distribution<std::uint64_t> bin(50, p);
        int covered = 0;
        const int trials = 2000;
        for (int t = 0; t < trials; ++t)
            if (lower_conf_bound(bin(g), 50, 1.0 - alpha) <= p) ++covered;
        const double se = std::sqrt(alpha * (1 - alpha) / trials);
        EXPECT_GE(static_cast<double>(covered) / trials, 1.0 - alpha - 3 * se) << "p=" << p;
    }
}

TEST(BinomialTail, MatchesBoost) {
    for (std::uint64_t n : {10ULL, 300ULL, 5000ULL})
        for (double p : {0.01, 0.3, 0.5, 0.97})
            for (std::uint64_t k : {std::uint64_t{1}, n / 4, n / 2, n}) {
                // P[X >= k] = I_p(k, n−k+1)
                const double oracle = boost::math::ibeta(static_cast<double>(k),
                                                         static_cast<double>(n - k + 1), p);
                const double got = binomial_upper_tail(k, n, p);
                EXPECT_NEAR(got, oracle, 1e-12 + 1e-9 * oracle) << k << "/" << n << " p=" << p;
            }
}

TEST(InvNormCdf, Examples) {
    EXPECT_EQ(inv_norm_cdf(0.5), 0.0);
    EXPECT_NEAR(inv_norm_cdf(0.975), 1.959964, 1e-6);
    EXPECT_THROW(inv_norm_cdf(0.0), ArgumentError);
    EXPECT_THROW(inv_norm_cdf(1.0), ArgumentError);
    EXPECT_THROW(inv_norm_cdf(-0.1), ArgumentError);
}

TEST(InvNormCdf, MatchesBoostAndIsMonotone) {
    boost::math::normal_distribution<double> nd;
    double prev = -1e300;
    for (int i = 1; i < 20000; ++i) {
        const double p = i / 20000.0;
        const double z = inv_norm_cdf(p);
        EXPECT_NEAR(z, boost::math::quantile(nd, p), 1e-9);
        EXPECT_GT(z, prev);
        prev = z;
        EXPECT_NEAR(z, -inv_norm_cdf(1.0 - p), 1e-9);
    }
    for (double p : {1e-12, 1e-8, 1e-4, 1 - 1e-4, 1 - 1e-8, 0.9992402})
        EXPECT_NEAR(inv_norm_cdf(p), boost::math::quantile(nd, p), 1e-9) << p;
}

TEST(GaussianDraw, ZeroSigmaAndDeterminism) {
    EXPECT_EQ(gaussian_draw({1, 2, 3}, 5, 0.0), Vector(5));
    EXPECT_EQ(gaussian_draw({1, 2, 3}, 5, 0.7), gaussian_draw({1, 2, 3}, 5, 0.7));
    EXPECT_NE(gaussian_draw({1, 2, 3}, 5, 0.7), gaussian_draw({1, 2, 4}, 5, 0.7));
    EXPECT_NE(gaussian_draw({1, 2, 3}, 5, 0.7), gaussian_draw({1, 3, 3}, 5, 0.7));
    EXPECT_NE(gaussian_draw({1, 2, 3}, 5, 0.7), gaussian_draw({2, 2, 3}, 5, 0.7));
    EXPECT_THROW(gaussian_draw({1, 2, 3}, 5, -1.0), ArgumentError);
}

TEST(GaussianDraw, OddDimIsPrefixConsistentWithScale) {
    const Vector a = gaussian_draw({9, 0, 1}, 3, 1.0);
    const Vector b = gaussian_draw({9, 0, 1}, 3, 2.0);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(b[i], 2.0 * a[i]);
}

TEST(GaussianDraw, OrderAndThreadIndependent) {
    std::vector<Vector> seq;
    for (std::uint64_t s = 0; s < 64; ++s) seq.push_back(gaussian_draw({5, 1, s}, 4, 1.0));
    std::vector<Vector> par(64, Vector(4));
    std::vector<std::thread> ts;
    for (int t = 0; t < 4; ++t)
        ts.emplace_back([&, t] {
            for (std::uint64_t s = 63 - t; s < 64; s -= 4) {
                par[s] = gaussian_draw({5, 1, s}, 4, 1.0);
                if (s < 4) break;
            }
        });
    for (auto& th : ts) th.join();
    EXPECT_EQ(seq, par);
}

TEST(GaussianDraw, MomentsOfAMillionDraws) {
    double sum = 0.0, sq = 0.0;
    const std::size_t per = 10;
    const std::size_t draws = 100000;
    for (std::uint64_t s = 0; s < draws; ++s) {
        const Vector v = gaussian_draw({42, 0, s}, per, 1.0);
        for (double x : v) {
            sum += x;
            sq += x * x;
        }
    }
    const double n = static_cast<double>(draws * per);
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 0.005);
    EXPECT_NEAR(sq / n - mean * mean, 1.0, 0.01);
}

TEST(GaussianDraw, DistinctStreamsUncorrelated) {
    double cross = 0.0;
    const int n = 20000;
    for (int s = 0; s < n; ++s) {
        const double a = gaussian_draw({1, 0, static_cast<std::uint64_t>(s)}, 1, 1.0)[0];
        const double b = gaussian_draw({1, 1, static_cast<std::uint64_t>(s)}, 1, 1.0)[0];
        cross += a * b;
    }
    EXPECT_NEAR(cross / n, 0.0, 4.0 / std::sqrt(n));
}

TEST(CounterRng, NextBelowInRangeAndRoughlyUniform) {
    CounterRng r(3, 4, 5, 1);
    std::vector<int> hist(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto v = r.next_below(7);
        ASSERT_LT(v, 7u);
        ++hist[v];
    }
    for (int h : hist) EXPECT_NEAR(h, 10000, 500);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 100; ++i) seen.insert(CounterRng(1, 2, 3, 0).next_u64());
    EXPECT_EQ(seen.size(), 1u);
}
