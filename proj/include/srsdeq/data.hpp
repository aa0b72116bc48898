#pragma once

// Synthetic point-cloud datasets.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "srsdeq/errors.hpp"
#include "srsdeq/linalg.hpp"
#include "srsdeq/stats.hpp"
#include "srsdeq/training.hpp"

namespace srsdeq {

enum class DataKind { blobs, two_moons, rings };

inline DataKind parse_data_kind(const std::string& s) {
    if (s == "blobs") return DataKind::blobs;
    if (s == "two_moons") return DataKind::two_moons;
    if (s == "rings") return DataKind::rings;
    throw ArgumentError("unknown dataset kind '" + s + "'");
}

inline std::string to_string(DataKind k) {
    switch (k) {
        case DataKind::blobs: return "blobs";
        case DataKind::two_moons: return "two_moons";
        case DataKind::rings: return "rings";
    }
    return "unknown";
}

struct DataSpec {
    DataKind kind = DataKind::two_moons;
    std::size_t n_points = 200;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::size_t num_classes = 2;  // blobs only; the others are binary
    std::size_t dim = 2;          // blobs only; the others are planar
    double separation = 4.0;      // blobs: distance between neighbouring centres
};

/// Class-balanced, deterministic in the seed. Rows are shuffled so any prefix is
/// roughly balanced.
inline Dataset gen_data(const DataSpec& spec) {
    const std::size_t k = spec.kind == DataKind::blobs ? spec.num_classes : 2;
    const std::size_t dim = spec.kind == DataKind::blobs ? spec.dim : 2;
    if (k < 2) throw ArgumentError("gen_data: need at least two classes");
    if (dim < 2) throw ArgumentError("gen_data: need dim >= 2");
    if (spec.n_points < 2 * k) throw ArgumentError("gen_data: n_points must be >= 2*num_classes");
    if (!(spec.noise >= 0.0)) throw ArgumentError("gen_data: noise must be >= 0");

    Dataset d;
    d.num_classes = k;
    std::vector<std::size_t> per_class(k, spec.n_points / k);
    for (std::size_t c = 0; c < spec.n_points % k; ++c) ++per_class[c];

    std::size_t row = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < per_class[c]; ++j, ++row) {
            std::vector<double> p(dim, 0.0);
            CounterRng rng(spec.seed, row, static_cast<std::uint64_t>(spec.kind), 7);
            const double frac = per_class[c] > 1
                                    ? static_cast<double>(j) / static_cast<double>(per_class[c] - 1)
                                    : 0.0;
            switch (spec.kind) {
                case DataKind::blobs: {
                    // Centres on a circle in the first two coordinates.
                    const double ang = 2.0 * std::numbers::pi * static_cast<double>(c) /
                                       static_cast<double>(k);
                    const double radius =
                        spec.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
                    p[0] = radius * std::cos(ang);
                    p[1] = radius * std::sin(ang);
                    break;
                }
                case DataKind::two_moons: {
                    const double t = std::numbers::pi * frac;
                    if (c == 0) {
                        p[0] = std::cos(t);
                        p[1] = std::sin(t);
                    } else {
                        p[0] = 1.0 - std::cos(t);
                        p[1] = 0.5 - std::sin(t);
                    }
                    break;
                }
                case DataKind::rings: {
                    const double t = 2.0 * std::numbers::pi * rng.next_unit();
                    const double r = c == 0 ? 1.0 : 2.0;
                    p[0] = r * std::cos(t);
                    p[1] = r * std::sin(t);
                    break;
                }
            }
            for (std::size_t i = 0; i < dim; i += 2) {
                const auto [a, b] = rng.next_normal_pair();
                p[i] += spec.noise * a;
                if (i + 1 < dim) p[i + 1] += spec.noise * b;
            }
            d.inputs.emplace_back(std::move(p));
            d.labels.push_back(static_cast<int>(c));
        }
    }

    CounterRng shuffle(spec.seed, 0, 0, static_cast<std::uint64_t>(RngDomain::shuffle));
    for (std::size_t i = d.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(shuffle.next_below(i));
        std::swap(d.inputs[i - 1], d.inputs[j]);
        std::swap(d.labels[i - 1], d.labels[j]);
    }
    return d;
}

}  // namespace srsdeq
