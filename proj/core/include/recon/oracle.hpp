#pragma once

#include <utility>
#include <vector>

#include "recon/observe.hpp"

namespace recon {

// Diagonal Gaussian over a full grid. For Downsample observations the true
// posterior couples cells within a block; mean stays exact and var holds the
// per-cell marginal variances of the coupled posterior.
struct GaussianBelief {
  GridSpec spec;
  std::vector<double> mean;
  std::vector<double> var;  // > 0 elementwise

  void validate() const;
};

// Exact linear-Gaussian posterior for Identity, Masking and Downsample
// operators with a diagonal prior. Downsample uses the block-local rank-1
// closed form (shared scalar observation of each block mean); temporally
// skipped frames keep the prior.
GaussianBelief exact_gaussian_posterior(const GaussianBelief& prior,
                                        const OperatorKind& kind, const Field& y,
                                        double sigma_y);

// Per-cell sample mean and unbiased variance of an ensemble.
std::pair<Field, Field> posterior_sample_stats(const std::vector<Field>& samples);

}  // namespace recon
