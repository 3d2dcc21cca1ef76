#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "repdiff/diffusion.hpp"
#include "repdiff/tensor.hpp"

namespace repdiff {

/// Mean over seeded random unit projections of the 1-D 2-Wasserstein distance
/// between the projected empirical distributions (sorted-sample / quantile
/// formula). Symmetric; zero for identical multisets.
double sliced_wasserstein(const Tensor& a, const Tensor& b, int projections,
                          std::uint64_t seed);

struct TvEstimate {
  double tv = 0.0;          // half L1 distance between binned masses
  double noise_bound = 0.0; // sqrt(bins/n) Monte-Carlo noise scale
};

/// Histogram total-variation estimate of 1-D samples against a reference
/// distribution given by its cdf. Mass outside [lo, hi] is folded into two
/// open-ended end bins.
TvEstimate tv_histogram(const std::vector<double>& samples,
                        const std::function<double(double)>& ref_cdf, int bins, double lo,
                        double hi);

/// Mean cosine between the x-head projection of the layer-l_x hidden state at
/// a fixed timestep and the true representation, over an evaluation set.
double alignment_cosine(const DiffusionModel& model, const NoiseSchedule& ns, const Tensor& x0s,
                        const Tensor& zx, int t, std::uint64_t seed);

}  // namespace repdiff
