#pragma once

#include <cstdint>
#include <vector>

#include "repdiff/tensor.hpp"

namespace repdiff {

/// K-component Gaussian mixture on a ring, with component indices as labels.
struct ToyDataset {
  Tensor x;                 // [N, 2]
  std::vector<int> labels;  // component index per row
  int num_classes = 0;
  double radius = 1.0;
  double sigma = 0.15;

  /// Component centers, [K, 2]; also used as encoder prototypes.
  Tensor centers() const;

  static ToyDataset ring_mixture(int K, int N, double radius, double sigma,
                                 std::uint64_t seed);
};

}  // namespace repdiff
