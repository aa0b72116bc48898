#pragma once

// Small trained models shared by the slower suites.

#include <cstddef>
#include <cstdint>

#include "srsdeq/data.hpp"
#include "srsdeq/deq.hpp"
#include "srsdeq/training.hpp"

namespace fixtures {

inline srsdeq::Dataset moons(std::size_t n, std::uint64_t seed, double noise = 0.1) {
    srsdeq::DataSpec s;
    s.kind = srsdeq::DataKind::two_moons;
    s.n_points = n;
    s.noise = noise;
    s.seed = seed;
    return srsdeq::gen_data(s);
}

/// Two-moons DEQ trained with Gaussian augmentation at `sigma`.
inline srsdeq::DeqModel toy_model(double sigma, std::size_t hidden = 16, std::size_t epochs = 60) {
    srsdeq::TrainConfig cfg;
    cfg.sigma = sigma;
    cfg.epochs = epochs;
    cfg.lr = 0.2;
    cfg.batch_size = 16;
    cfg.seed = 11;
    return srsdeq::train(srsdeq::make_random_model(hidden, 2, 2, 0.9, 5), moons(200, 1), cfg).model;
}

/// A stiffer cell: orthogonal recurrent weights at gamma 0.95, so cold solves
/// need several iterations more than the default toy.
inline srsdeq::DeqModel stiff_model(double sigma) {
    srsdeq::TrainConfig cfg;
    cfg.sigma = sigma;
    cfg.epochs = 20;
    cfg.lr = 0.1;
    cfg.batch_size = 16;
    cfg.seed = 11;
    const auto init =
        srsdeq::make_random_model(32, 2, 2, 0.95, 5, srsdeq::WeightInit::orthogonal);
    return srsdeq::train(init, moons(200, 1), cfg).model;
}

}  // namespace fixtures
