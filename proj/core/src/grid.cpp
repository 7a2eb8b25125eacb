#include "recon/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace recon {

void GridSpec::validate() const {
  require(height >= 4 && width >= 4, ErrorKind::InvalidArgument,
          "grid must be at least 4x4");
  require(n_time >= 1, ErrorKind::InvalidArgument, "n_time must be >= 1");
  require(dt_hours > 0.0, ErrorKind::InvalidArgument, "dt_hours must be > 0");
}

Field::Field(const GridSpec& s, std::vector<double> v) : spec(s), values(std::move(v)) {
  spec.validate();
  require(values.size() == spec.cells(), ErrorKind::ShapeError,
          "field payload does not match spec shape");
  check_finite();
}

Field Field::zeros(const GridSpec& s) {
  return Field(s, std::vector<double>(s.cells(), 0.0));
}

Field Field::constant(const GridSpec& s, double value) {
  return Field(s, std::vector<double>(s.cells(), value));
}

void Field::check_finite() const {
  for (double v : values) {
    require(std::isfinite(v), ErrorKind::InvalidArgument,
            "field values must be finite");
  }
}

MaskField::MaskField(const GridSpec& s, std::vector<uint8_t> f) : spec(s), flags(std::move(f)) {
  spec.validate();
  require(flags.size() == spec.cells(), ErrorKind::ShapeError,
          "mask payload does not match spec shape");
  for (uint8_t b : flags) {
    require(b == 0 || b == 1, ErrorKind::InvalidArgument,
            "mask flags must be exactly 0 or 1");
  }
}

MaskField MaskField::ones(const GridSpec& s) {
  return MaskField(s, std::vector<uint8_t>(s.cells(), 1));
}

std::size_t MaskField::count_ones() const {
  std::size_t n = 0;
  for (uint8_t b : flags) n += b;
  return n;
}

Field log_transform(const Field& x) {
  const double floor = -1.0 + std::numeric_limits<double>::epsilon();
  std::vector<double> out(x.values.size());
  for (std::size_t n = 0; n < x.values.size(); ++n) {
    const double v = x.values[n];
    require(v >= floor, ErrorKind::NegativeInput,
            "log_transform input below -1; raw field must be nonnegative");
    out[n] = std::log1p(v);
  }
  return Field(x.spec, std::move(out));
}

double percentile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  require(n >= 1, ErrorKind::InvalidArgument, "percentile of empty set");
  const double rank = p / 100.0 * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

NormParams fit_normalizer(const std::vector<Field>& dataset) {
  std::size_t total = 0;
  for (const Field& f : dataset) total += f.values.size();
  require(total >= 100, ErrorKind::InvalidArgument,
          "fit_normalizer needs at least 100 pooled values");

  std::vector<double> pooled;
  pooled.reserve(total);
  for (const Field& f : dataset) {
    const Field logged = log_transform(f);
    pooled.insert(pooled.end(), logged.values.begin(), logged.values.end());
  }
  std::sort(pooled.begin(), pooled.end());

  NormParams p;
  p.q_lo = percentile_sorted(pooled, 1.0);
  p.q_hi = percentile_sorted(pooled, 99.0);
  require(p.q_hi - p.q_lo >= 1e-9, ErrorKind::DegenerateDistribution,
          "pooled log values are (near-)constant");
  return p;
}

double normalize_value(double raw, const NormParams& p) {
  const double lg = std::log1p(raw);
  return 2.0 * (lg - p.q_lo) / (p.q_hi - p.q_lo) - 1.0;
}

double denormalize_value(double norm, const NormParams& p) {
  return std::expm1((norm + 1.0) / 2.0 * (p.q_hi - p.q_lo) + p.q_lo);
}

Field normalize(const Field& x, const NormParams& p) {
  p.validate();
  const Field logged = log_transform(x);
  std::vector<double> out(logged.values.size());
  const double scale = 2.0 / (p.q_hi - p.q_lo);
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = (logged.values[n] - p.q_lo) * scale - 1.0;
  }
  return Field(x.spec, std::move(out));
}

Field denormalize(const Field& x, const NormParams& p) {
  p.validate();
  std::vector<double> out(x.values.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = denormalize_value(x.values[n], p);
  }
  return Field(x.spec, std::move(out));
}

}  // namespace recon
