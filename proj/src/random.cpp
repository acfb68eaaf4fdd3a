#include "lsgpr/random.hpp"

#include <cmath>

#include "lsgpr/error.hpp"

namespace lsgpr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

double draw_normal(Rng& rng, double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(rng);
}

double draw_gamma(Rng& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0)) throw NumericalError("gamma draw with non-positive parameter");
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

double draw_inv_gamma(Rng& rng, double shape, double scale) {
  return 1.0 / draw_gamma(rng, shape, scale);
}

double draw_beta(Rng& rng, double a, double b) {
  const double x = draw_gamma(rng, a, 1.0);
  const double y = draw_gamma(rng, b, 1.0);
  return x / (x + y);
}

bool draw_bernoulli(Rng& rng, double prob) { return draw_uniform(rng) < prob; }

double draw_uniform(Rng& rng) { return std::generate_canonical<double, 53>(rng); }

}  // namespace lsgpr
