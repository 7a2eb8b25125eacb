#pragma once

#include <utility>
#include <vector>

#include "recon/grid.hpp"

namespace recon {

// Radially averaged power spectrum. power[b] is the mean squared DFT
// magnitude over the integer ring |k| = b; bins with no contributors are
// dropped. Convention (documented wherever spectra are exported): the frame
// mean is removed, the forward DFT is unnormalized, rings are taken over the
// full spectrum with signed frequencies, so
//   sum_b power[b] * n_contributors[b] = H * W * sum_cells (v - mean)^2.
struct Spectrum {
  std::vector<int> wavenumbers;
  std::vector<double> power;
  std::vector<int> n_contributors;

  double total_energy() const;  // sum of power * n_contributors
};

struct AcfCurve {
  std::vector<int> lags;       // 0..max_lag
  std::vector<double> values;  // values[0] == 1 exactly
};

Spectrum rapsd(const std::vector<double>& frame, int h, int w);
Spectrum rapsd_frame(const Field& x, int t);

// Mean absolute natural-log ratio of per-frame RAPSDs over wavenumbers
// 1..K, then over frames; K is the highest bin populated in both spectra.
// Bins where either power is zero are excluded and counted.
struct MelrResult {
  double value = 0.0;
  long excluded_bins = 0;
};
MelrResult melr_detailed(const Field& gen, const Field& gt);
double melr(const Field& gen, const Field& gt);

// Per-frame RMSE over grid cells divided by sigma_x, averaged over frames.
double nrmse(const Field& gen, const Field& gt, double sigma_x);

// Per-cell sample autocorrelation (mean removed, normalized by the lag-0
// variance), averaged over cells with nonzero variance.
AcfCurve temporal_acf(const Field& x, int max_lag);

// Per-cell temporal mean and population standard deviation maps (h*w each).
struct ClimatologyMaps {
  int height = 0;
  int width = 0;
  std::vector<double> mean;
  std::vector<double> stddev;
};
ClimatologyMaps spatial_mean_std(const Field& x);

// Population standard deviation over every cell of the field; the sigma_x
// denominator of nrmse when evaluating against a ground-truth set.
double dataset_std(const Field& x);

}  // namespace recon
