#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "recon/errors.hpp"

namespace recon {

// Grid geometry of a (n_time, height, width) sequence. height indexes
// latitude rows (i), width indexes longitude columns (j), n_time steps (t).
struct GridSpec {
  int n_time = 1;
  int height = 4;
  int width = 4;
  double dt_hours = 1.0;  // nominal step, informational only

  std::size_t cells() const {
    return static_cast<std::size_t>(n_time) * height * width;
  }
  std::size_t frame_cells() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool operator==(const GridSpec& o) const {
    return n_time == o.n_time && height == o.height && width == o.width;
  }
  bool operator!=(const GridSpec& o) const { return !(*this == o); }

  void validate() const;
};

// Real-valued (t, i, j) grid sequence. Values are always finite; missingness
// is represented only through MaskField, never via NaN sentinels.
struct Field {
  GridSpec spec;
  std::vector<double> values;  // row-major (t, i, j)

  Field() = default;
  Field(const GridSpec& s, std::vector<double> v);
  static Field zeros(const GridSpec& s);
  static Field constant(const GridSpec& s, double value);

  double at(int t, int i, int j) const {
    return values[(static_cast<std::size_t>(t) * spec.height + i) * spec.width + j];
  }
  double& at(int t, int i, int j) {
    return values[(static_cast<std::size_t>(t) * spec.height + i) * spec.width + j];
  }
  const double* frame(int t) const { return values.data() + static_cast<std::size_t>(t) * spec.frame_cells(); }
  double* frame(int t) { return values.data() + static_cast<std::size_t>(t) * spec.frame_cells(); }

  void check_finite() const;
};

// Binary (t, i, j) grid: 1 = observed/valid, 0 = missing.
struct MaskField {
  GridSpec spec;
  std::vector<uint8_t> flags;  // row-major (t, i, j), each exactly 0 or 1

  MaskField() = default;
  MaskField(const GridSpec& s, std::vector<uint8_t> f);
  static MaskField ones(const GridSpec& s);

  uint8_t at(int t, int i, int j) const {
    return flags[(static_cast<std::size_t>(t) * spec.height + i) * spec.width + j];
  }
  uint8_t& at(int t, int i, int j) {
    return flags[(static_cast<std::size_t>(t) * spec.height + i) * spec.width + j];
  }
  std::size_t count_ones() const;
};

// Quantile anchors of the log-transformed data, fitted on a training set.
struct NormParams {
  double q_lo = 0.0;  // 1st percentile of pooled log values
  double q_hi = 1.0;  // 99th percentile of pooled log values

  void validate() const {
    require(q_hi > q_lo, ErrorKind::DegenerateDistribution,
            "normalizer requires q_hi > q_lo");
  }
};

// Elementwise ln(1 + v). Rejects values below -1 + machine epsilon.
Field log_transform(const Field& x);

// Pools log-transformed values of the whole dataset and takes the 1st/99th
// percentiles with linear interpolation between closest order statistics.
NormParams fit_normalizer(const std::vector<Field>& dataset);

// Percentile helper shared with fit_normalizer: linear interpolation between
// order statistics at rank p/100 * (n - 1). `sorted` must be ascending.
double percentile_sorted(const std::vector<double>& sorted, double p);

// log_transform followed by the affine map onto [-1, 1] anchored at
// (q_lo, q_hi); values outside the anchors pass through unclipped.
Field normalize(const Field& x, const NormParams& p);

// Exact functional inverse of normalize.
Field denormalize(const Field& x, const NormParams& p);

// Scalar versions used by operator- and observation-normalization code.
double normalize_value(double raw, const NormParams& p);
double denormalize_value(double norm, const NormParams& p);

}  // namespace recon
