#pragma once

#include <cstdint>
#include <random>

namespace lsgpr {

using Rng = std::mt19937_64;

// Sub-seed derivation: splitmix64 over (master, stream, index). Streams are
// independent labels (e.g. "cell", "subject") so parallel work stays
// reproducible regardless of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

double draw_normal(Rng& rng, double mean = 0.0, double sd = 1.0);
// shape/rate parameterization
double draw_gamma(Rng& rng, double shape, double rate);
double draw_inv_gamma(Rng& rng, double shape, double scale);
double draw_beta(Rng& rng, double a, double b);
bool draw_bernoulli(Rng& rng, double prob);
double draw_uniform(Rng& rng);

}  // namespace lsgpr
