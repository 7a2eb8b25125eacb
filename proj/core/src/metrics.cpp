#include "recon/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "recon/fft.hpp"

namespace recon {

double Spectrum::total_energy() const {
  double e = 0.0;
  for (std::size_t b = 0; b < power.size(); ++b) e += power[b] * n_contributors[b];
  return e;
}

Spectrum rapsd(const std::vector<double>& frame, int h, int w) {
  require(h >= 4 && w >= 4, ErrorKind::ShapeError, "rapsd needs at least 4x4");
  require(static_cast<int>(frame.size()) == h * w, ErrorKind::ShapeError,
          "rapsd: frame size mismatch");

  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= static_cast<double>(frame.size());
  std::vector<double> centered(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) centered[i] = frame[i] - mean;

  const auto spec = fft2(centered, h, w);

  const int k_max = static_cast<int>(std::lround(
      std::sqrt(static_cast<double>(h / 2) * (h / 2) + static_cast<double>(w / 2) * (w / 2))));
  std::vector<double> sum(k_max + 1, 0.0);
  std::vector<int> count(k_max + 1, 0);
  for (int ky = 0; ky < h; ++ky) {
    const double fy = signed_freq(ky, h);
    for (int kx = 0; kx < w; ++kx) {
      const double fx = signed_freq(kx, w);
      const int ring = static_cast<int>(std::lround(std::sqrt(fy * fy + fx * fx)));
      const std::complex<double> c = spec[static_cast<std::size_t>(ky) * w + kx];
      sum[ring] += std::norm(c);
      ++count[ring];
    }
  }

  Spectrum out;
  for (int b = 0; b <= k_max; ++b) {
    if (count[b] == 0) continue;
    out.wavenumbers.push_back(b);
    out.power.push_back(sum[b] / count[b]);
    out.n_contributors.push_back(count[b]);
  }
  return out;
}

Spectrum rapsd_frame(const Field& x, int t) {
  require(t >= 0 && t < x.spec.n_time, ErrorKind::ShapeError, "frame index out of range");
  std::vector<double> frame(x.frame(t), x.frame(t) + x.spec.frame_cells());
  return rapsd(frame, x.spec.height, x.spec.width);
}

MelrResult melr_detailed(const Field& gen, const Field& gt) {
  require(gen.spec == gt.spec, ErrorKind::ShapeError, "melr: shape mismatch");

  MelrResult res;
  double frame_sum = 0.0;
  int frames_used = 0;
  for (int t = 0; t < gen.spec.n_time; ++t) {
    const Spectrum sg = rapsd_frame(gen, t);
    const Spectrum st = rapsd_frame(gt, t);

    // Index both spectra by wavenumber; identical grids yield identical bins.
    double acc = 0.0;
    int used = 0;
    const std::size_t nb = std::min(sg.wavenumbers.size(), st.wavenumbers.size());
    for (std::size_t b = 0; b < nb; ++b) {
      const int k = sg.wavenumbers[b];
      if (k < 1) continue;
      const double pg = sg.power[b];
      const double pt = st.power[b];
      if (pg <= 0.0 || pt <= 0.0) {
        ++res.excluded_bins;
        continue;
      }
      acc += std::fabs(std::log(pg / pt));
      ++used;
    }
    if (used > 0) {
      frame_sum += acc / used;
      ++frames_used;
    }
  }
  require(frames_used > 0, ErrorKind::EmptySpectrum,
          "melr: every wavenumber bin was excluded");
  res.value = frame_sum / frames_used;
  return res;
}

double melr(const Field& gen, const Field& gt) { return melr_detailed(gen, gt).value; }

double nrmse(const Field& gen, const Field& gt, double sigma_x) {
  require(gen.spec == gt.spec, ErrorKind::ShapeError, "nrmse: shape mismatch");
  require(sigma_x > 0.0, ErrorKind::InvalidArgument, "nrmse: sigma_x must be > 0");

  const std::size_t fc = gen.spec.frame_cells();
  double acc = 0.0;
  for (int t = 0; t < gen.spec.n_time; ++t) {
    const double* a = gen.frame(t);
    const double* b = gt.frame(t);
    double sq = 0.0;
    for (std::size_t i = 0; i < fc; ++i) {
      const double d = a[i] - b[i];
      sq += d * d;
    }
    acc += std::sqrt(sq / static_cast<double>(fc)) / sigma_x;
  }
  return acc / gen.spec.n_time;
}

AcfCurve temporal_acf(const Field& x, int max_lag) {
  const int T = x.spec.n_time;
  require(max_lag >= 1 && max_lag < T, ErrorKind::InvalidArgument,
          "temporal_acf needs n_time > max_lag >= 1");

  const std::size_t fc = x.spec.frame_cells();
  std::vector<double> acc(max_lag + 1, 0.0);
  std::size_t cells_used = 0;

  std::vector<double> series(T);
  for (std::size_t c = 0; c < fc; ++c) {
    double mean = 0.0;
    for (int t = 0; t < T; ++t) {
      series[t] = x.values[static_cast<std::size_t>(t) * fc + c];
      mean += series[t];
    }
    mean /= T;
    double var = 0.0;
    for (int t = 0; t < T; ++t) {
      series[t] -= mean;
      var += series[t] * series[t];
    }
    if (var <= 0.0) continue;
    ++cells_used;
    for (int lag = 1; lag <= max_lag; ++lag) {
      double cov = 0.0;
      for (int t = 0; t + lag < T; ++t) cov += series[t] * series[t + lag];
      acc[lag] += cov / var;
    }
  }
  require(cells_used > 0, ErrorKind::AllConstant,
          "temporal_acf: every cell has zero variance");

  AcfCurve curve;
  curve.lags.resize(max_lag + 1);
  curve.values.resize(max_lag + 1);
  curve.lags[0] = 0;
  curve.values[0] = 1.0;
  for (int lag = 1; lag <= max_lag; ++lag) {
    curve.lags[lag] = lag;
    curve.values[lag] = acc[lag] / static_cast<double>(cells_used);
  }
  return curve;
}

ClimatologyMaps spatial_mean_std(const Field& x) {
  const int T = x.spec.n_time;
  require(T >= 2, ErrorKind::InvalidArgument, "spatial_mean_std needs n_time >= 2");
  const std::size_t fc = x.spec.frame_cells();

  ClimatologyMaps maps;
  maps.height = x.spec.height;
  maps.width = x.spec.width;
  maps.mean.assign(fc, 0.0);
  maps.stddev.assign(fc, 0.0);

  for (int t = 0; t < T; ++t) {
    const double* f = x.frame(t);
    for (std::size_t c = 0; c < fc; ++c) maps.mean[c] += f[c];
  }
  for (std::size_t c = 0; c < fc; ++c) maps.mean[c] /= T;
  for (int t = 0; t < T; ++t) {
    const double* f = x.frame(t);
    for (std::size_t c = 0; c < fc; ++c) {
      const double d = f[c] - maps.mean[c];
      maps.stddev[c] += d * d;
    }
  }
  for (std::size_t c = 0; c < fc; ++c) maps.stddev[c] = std::sqrt(maps.stddev[c] / T);
  return maps;
}

double dataset_std(const Field& x) {
  double mean = 0.0;
  for (double v : x.values) mean += v;
  mean /= static_cast<double>(x.values.size());
  double var = 0.0;
  for (double v : x.values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.values.size()));
}

}  // namespace recon
