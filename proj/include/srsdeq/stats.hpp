#pragma once

// Exact binomial confidence bounds, the standard-normal quantile, and a
// counter-based Gaussian noise source.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"

namespace srsdeq {

/// Overall failure rate α and the per-test budget α̃ = α/2 of the two-stage
/// certification.
class ConfidenceSpec {
public:
    explicit ConfidenceSpec(double alpha = 0.001) : alpha_(alpha) {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw ArgumentError("ConfidenceSpec: alpha must lie in (0,1), got " +
                                std::to_string(alpha));
    }
    double alpha() const noexcept { return alpha_; }
    double alpha_tilde() const noexcept { return alpha_ / 2.0; }
    /// Confidence level 1 − α̃ handed to lower_conf_bound.
    double test_confidence() const noexcept { return 1.0 - alpha_tilde(); }

private:
    double alpha_;
};

namespace detail {

/// log P[Binomial(n, p) >= k] for 0 < p < 1, 0 < k <= n.
inline double log_binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
    const double nd = static_cast<double>(n);
    const double lp = std::log(p);
    const double lq = std::log1p(-p);
    const double odds = p / (1.0 - p);
    auto log_pmf = [&](std::uint64_t j) {
        const double jd = static_cast<double>(j);
        return std::lgamma(nd + 1.0) - std::lgamma(jd + 1.0) - std::lgamma(nd - jd + 1.0) +
               jd * lp + (nd - jd) * lq;
    };

    const double mean = nd * p;
    if (static_cast<double>(k) > mean) {
        // Terms decrease from j = k upward; sum relative to the first one.
        const double l0 = log_pmf(k);
        double sum = 1.0;
        double term = 1.0;
        for (std::uint64_t j = k; j < n; ++j) {
            term *= static_cast<double>(n - j) / static_cast<double>(j + 1) * odds;
            sum += term;
            if (term < sum * 1e-17) break;
        }
        return l0 + std::log(sum);
    }
    // Complement: P[X <= k-1], terms decrease from j = k-1 downward.
    const std::uint64_t top = k - 1;
    const double l0 = log_pmf(top);
    double sum = 1.0;
    double term = 1.0;
    for (std::uint64_t j = top; j > 0; --j) {
        term *= static_cast<double>(j) / static_cast<double>(n - j + 1) / odds;
        sum += term;
        if (term < sum * 1e-17) break;
    }
    const double lower = std::exp(l0 + std::log(sum));
    return std::log1p(-std::min(lower, 1.0));
}

}  // namespace detail

/// P[Binomial(n, p) >= k].
inline double binomial_upper_tail(std::uint64_t k, std::uint64_t n, double p) {
    if (k == 0) return 1.0;
    if (k > n) return 0.0;
    if (p <= 0.0) return 0.0;
    if (p >= 1.0) return 1.0;
    return std::exp(detail::log_binomial_upper_tail(k, n, p));
}

/// One-sided Clopper–Pearson lower bound: the largest p with
/// P[Binomial(n, p) >= k] <= 1 − confidence, found by bisection to 1e-12.
inline double lower_conf_bound(std::uint64_t k, std::uint64_t n, double confidence) {
    if (n == 0) throw ArgumentError("lower_conf_bound: n must be >= 1");
    if (k > n)
        throw ArgumentError("lower_conf_bound: k=" + std::to_string(k) + " exceeds n=" +
                            std::to_string(n));
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ArgumentError("lower_conf_bound: confidence must lie in (0,1)");
    if (k == 0) return 0.0;

    const double log_alpha = std::log1p(-confidence);
    double lo = 0.0;
    double hi = 1.0;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (detail::log_binomial_upper_tail(k, n, mid) <= log_alpha)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

/// Standard normal CDF.
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double norm_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Φ⁻¹(p). Acklam's rational approximation followed by Halley refinement on Φ.
inline double inv_norm_cdf(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw ArgumentError("inv_norm_cdf: p must lie strictly inside (0,1), got " +
                            std::to_string(p));
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Work on the tail nearest to p so the residual keeps relative precision.
    for (int it = 0; it < 3; ++it) {
        const double e = p < 0.5 ? norm_cdf(x) - p : (1.0 - p) - norm_cdf(-x);
        const double u = e / norm_pdf(x);
        x = x - u / (1.0 + 0.5 * x * u);
    }
    return x;
}

/// Identifies one Gaussian draw: the noise for (seed, point, sample) is a pure
/// function of the triple.
struct NoiseStream {
    std::uint64_t seed = 0;
    std::uint64_t point_index = 0;
    std::uint64_t sample_index = 0;
};

/// Counter-based generator: SplitMix64 keyed on a tuple of integers.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t domain = 0)
        : state_(key(seed, a, b, domain)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix(state_);
    }

    /// Uniform on [0, 1).
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, bound); bound > 0. Lemire's multiply-shift with
    /// rejection, so the result is exactly uniform.
    std::uint64_t next_below(std::uint64_t bound) {
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Box–Muller pair of independent standard normals.
    std::pair<double, double> next_normal_pair() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(t), r * std::sin(t)};
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t key(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                             std::uint64_t domain) {
        std::uint64_t h = mix(seed + 0x243f6a8885a308d3ULL);
        h = mix(h ^ (domain * 0x9e3779b97f4a7c15ULL + 0x13198a2e03707344ULL));
        h = mix(h ^ (a + 0xa4093822299f31d0ULL));
        h = mix(h ^ (b + 0x082efa98ec4e6c89ULL));
        return h;
    }

    std::uint64_t state_;
};

/// Domain tags separating independent uses of CounterRng.
enum class RngDomain : std::uint64_t { noise = 0, reservoir = 1, training = 2, shuffle = 3 };

/// dim i.i.d. N(0, σ²) values for the given stream coordinates.
inline Vector gaussian_draw(const NoiseStream& stream, std::size_t dim, double sigma) {
    if (!(sigma >= 0.0)) throw ArgumentError("gaussian_draw: sigma must be >= 0");
    std::vector<double> out(dim, 0.0);
    if (sigma == 0.0) return Vector::unchecked(std::move(out));
    CounterRng rng(stream.seed, stream.point_index, stream.sample_index,
                   static_cast<std::uint64_t>(RngDomain::noise));
    for (std::size_t i = 0; i < dim; i += 2) {
        const auto [z0, z1] = rng.next_normal_pair();
        out[i] = sigma * z0;
        if (i + 1 < dim) out[i + 1] = sigma * z1;
    }
    return Vector::unchecked(std::move(out));
}

}  // namespace srsdeq
