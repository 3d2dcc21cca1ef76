#include "repdiff/dataset.hpp"

#include <cmath>
#include <stdexcept>

#include "repdiff/rng.hpp"

namespace repdiff {

Tensor ToyDataset::centers() const {
  Tensor c = Tensor::zeros(num_classes, 2);
  for (int k = 0; k < num_classes; ++k) {
    const double ang = 2.0 * M_PI * k / num_classes;
    c.at(k, 0) = radius * std::cos(ang);
    c.at(k, 1) = radius * std::sin(ang);
  }
  return c;
}

ToyDataset ToyDataset::ring_mixture(int K, int N, double radius, double sigma,
                                    std::uint64_t seed) {
  if (K < 1 || N < 1) throw std::invalid_argument("ring_mixture: K and N must be positive");
  if (sigma < 0.0) throw std::invalid_argument("ring_mixture: sigma must be >= 0");
  ToyDataset d;
  d.num_classes = K;
  d.radius = radius;
  d.sigma = sigma;
  d.x = Tensor::zeros(N, 2);
  d.labels.resize(N);
  const Tensor c = d.centers();
  Rng rng(derive_seed(seed, 0xda7a));
  for (int i = 0; i < N; ++i) {
    const int k = static_cast<int>(rng.uniform_index(K));
    d.labels[i] = k;
    d.x.at(i, 0) = c.at(k, 0) + sigma * rng.normal();
    d.x.at(i, 1) = c.at(k, 1) + sigma * rng.normal();
  }
  return d;
}

}  // namespace repdiff
