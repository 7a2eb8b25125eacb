#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <map>

#include "recon/metrics.hpp"
#include "recon/rng.hpp"

using namespace recon;

namespace {

// Independent oracle: direct O(N^2) DFT plus ring binning, no FFT library.
std::map<int, std::pair<double, int>> naive_rapsd(const std::vector<double>& frame, int h,
                                                  int w) {
  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= frame.size();

  std::map<int, std::pair<double, int>> rings;  // ring -> (sum power, count)
  for (int ky = 0; ky < h; ++ky) {
    for (int kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const double phase = -2.0 * M_PI * (static_cast<double>(ky) * y / h +
                                              static_cast<double>(kx) * x / w);
          acc += (frame[static_cast<std::size_t>(y) * w + x] - mean) *
                 std::complex<double>(std::cos(phase), std::sin(phase));
        }
      }
      const double fy = ky <= h / 2 ? ky : ky - h;
      const double fx = kx <= w / 2 ? kx : kx - w;
      const int ring = static_cast<int>(std::lround(std::sqrt(fy * fy + fx * fx)));
      rings[ring].first += std::norm(acc);
      rings[ring].second += 1;
    }
  }
  return rings;
}

double naive_melr(const Field& gen, const Field& gt) {
  double frame_sum = 0.0;
  int frames = 0;
  for (int t = 0; t < gen.spec.n_time; ++t) {
    std::vector<double> fg(gen.frame(t), gen.frame(t) + gen.spec.frame_cells());
    std::vector<double> ft(gt.frame(t), gt.frame(t) + gt.spec.frame_cells());
    const auto rg = naive_rapsd(fg, gen.spec.height, gen.spec.width);
    const auto rt = naive_rapsd(ft, gt.spec.height, gt.spec.width);
    double acc = 0.0;
    int used = 0;
    for (const auto& [ring, pg] : rg) {
      if (ring < 1) continue;
      const auto it = rt.find(ring);
      if (it == rt.end()) continue;
      const double a = pg.first / pg.second;
      const double b = it->second.first / it->second.second;
      if (a <= 0.0 || b <= 0.0) continue;
      acc += std::fabs(std::log(a / b));
      ++used;
    }
    if (used > 0) {
      frame_sum += acc / used;
      ++frames;
    }
  }
  return frame_sum / frames;
}

Field random_field(const GridSpec& spec, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(spec.cells());
  for (double& x : v) x = rng.normal();
  return Field(spec, std::move(v));
}

// Per-cell AR(1) sequence, built directly so metrics tests do not depend on
// the generator module.
Field ar1_field(const GridSpec& spec, double rho, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(spec.cells());
  const std::size_t fc = spec.frame_cells();
  for (std::size_t c = 0; c < fc; ++c) v[c] = rng.normal();
  const double innov = std::sqrt(1.0 - rho * rho);
  for (int t = 1; t < spec.n_time; ++t) {
    for (std::size_t c = 0; c < fc; ++c) {
      v[static_cast<std::size_t>(t) * fc + c] =
          rho * v[static_cast<std::size_t>(t - 1) * fc + c] + innov * rng.normal();
    }
  }
  return Field(spec, std::move(v));
}

}  // namespace

TEST_CASE("rapsd of a constant frame is all zero") {
  const Spectrum s = rapsd(std::vector<double>(16 * 16, 3.7), 16, 16);
  for (double p : s.power) CHECK(p == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("rapsd concentrates a pure tone in its ring") {
  const int H = 16, W = 32;
  std::vector<double> frame(H * W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      frame[static_cast<std::size_t>(y) * W + x] = std::cos(2.0 * M_PI * 4.0 * x / W);
    }
  }
  const Spectrum s = rapsd(frame, H, W);
  double total = 0.0, in_ring = 0.0;
  for (std::size_t b = 0; b < s.power.size(); ++b) {
    const double e = s.power[b] * s.n_contributors[b];
    total += e;
    if (s.wavenumbers[b] == 4) in_ring += e;
  }
  CHECK(in_ring / total >= 0.99);
}

TEST_CASE("rapsd satisfies the Parseval identity") {
  const int H = 12, W = 20;
  const Field f = random_field(GridSpec{1, H, W, 1.0}, 5);
  std::vector<double> frame(f.values);
  const Spectrum s = rapsd(frame, H, W);

  double mean = 0.0;
  for (double v : frame) mean += v;
  mean /= frame.size();
  double ss = 0.0;
  for (double v : frame) ss += (v - mean) * (v - mean);

  const double expected = static_cast<double>(H) * W * ss;
  CHECK(std::fabs(s.total_energy() - expected) <= 1e-8 * expected);
}

TEST_CASE("rapsd is invariant to adding a constant") {
  const int H = 8, W = 8;
  const Field f = random_field(GridSpec{1, H, W, 1.0}, 6);
  std::vector<double> a(f.values), b(f.values);
  for (double& v : b) v += 11.25;
  const Spectrum sa = rapsd(a, H, W);
  const Spectrum sb = rapsd(b, H, W);
  for (std::size_t i = 0; i < sa.power.size(); ++i) {
    CHECK(sa.power[i] == doctest::Approx(sb.power[i]).epsilon(1e-10));
  }
}

TEST_CASE("melr golden values") {
  const GridSpec spec{3, 16, 16, 1.0};
  const Field gt = random_field(spec, 7);
  CHECK(melr(gt, gt) == doctest::Approx(0.0).epsilon(1e-15));

  // per-frame anomaly scaling by 2 multiplies every ring power by 4
  Field gen = gt;
  for (int t = 0; t < spec.n_time; ++t) {
    double mean = 0.0;
    const std::size_t fc = spec.frame_cells();
    for (std::size_t i = 0; i < fc; ++i) mean += gt.frame(t)[i];
    mean /= static_cast<double>(fc);
    for (std::size_t i = 0; i < fc; ++i) {
      gen.frame(t)[i] = 2.0 * (gt.frame(t)[i] - mean) + mean;
    }
  }
  CHECK(melr(gen, gt) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
}

TEST_CASE("melr matches the scalar-loop oracle") {
  const GridSpec spec{2, 12, 8, 1.0};
  const Field gen = random_field(spec, 21);
  const Field gt = random_field(spec, 22);
  const double ours = melr(gen, gt);
  const double ref = naive_melr(gen, gt);
  CHECK(std::fabs(ours - ref) <= 1e-10 * std::max(1.0, std::fabs(ref)));
}

TEST_CASE("melr is symmetric") {
  const GridSpec spec{2, 8, 8, 1.0};
  const Field a = random_field(spec, 31);
  const Field b = random_field(spec, 32);
  CHECK(melr(a, b) == doctest::Approx(melr(b, a)).epsilon(1e-12));
}

TEST_CASE("nrmse golden values and oracle") {
  const GridSpec spec{4, 8, 8, 1.0};
  const Field gt = random_field(spec, 41);
  const double sigma_x = 1.7;
  CHECK(nrmse(gt, gt, sigma_x) == doctest::Approx(0.0));

  Field gen = gt;
  const double c = 0.35;
  for (double& v : gen.values) v += c;
  CHECK(nrmse(gen, gt, sigma_x) == doctest::Approx(c / sigma_x).epsilon(1e-12));

  const Field gen2 = random_field(spec, 42);
  double acc = 0.0;
  for (int t = 0; t < spec.n_time; ++t) {
    double sq = 0.0;
    for (std::size_t i = 0; i < spec.frame_cells(); ++i) {
      const double d = gen2.frame(t)[i] - gt.frame(t)[i];
      sq += d * d;
    }
    acc += std::sqrt(sq / static_cast<double>(spec.frame_cells())) / sigma_x;
  }
  acc /= spec.n_time;
  CHECK(nrmse(gen2, gt, sigma_x) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("temporal_acf lag 0 is exactly 1 and range bounded") {
  const Field f = ar1_field(GridSpec{32, 4, 4, 1.0}, 0.5, 51);
  const AcfCurve acf = temporal_acf(f, 8);
  CHECK(acf.values[0] == 1.0);
  for (double v : acf.values) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
}

TEST_CASE("temporal_acf tracks AR(1) correlation") {
  const GridSpec spec{256, 8, 8, 1.0};
  const AcfCurve white = temporal_acf(ar1_field(spec, 0.0, 61), 2);
  CHECK(std::fabs(white.values[1]) < 0.1);

  const AcfCurve persistent = temporal_acf(ar1_field(spec, 0.9, 62), 2);
  CHECK(persistent.values[1] >= 0.8);
  CHECK(persistent.values[1] <= 0.95);
}

TEST_CASE("temporal_acf rejects all-constant sequences") {
  const Field f = Field::constant(GridSpec{8, 4, 4, 1.0}, 2.0);
  try {
    temporal_acf(f, 2);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllConstant);
  }
}

TEST_CASE("spatial_mean_std golden values and oracle") {
  const GridSpec two{2, 4, 4, 1.0};
  Field f = Field::zeros(two);
  Rng rng(71);
  for (double& v : f.values) v = rng.uniform(-2.0, 2.0);
  const ClimatologyMaps maps = spatial_mean_std(f);
  for (std::size_t c = 0; c < two.frame_cells(); ++c) {
    const double a = f.values[c];
    const double b = f.values[two.frame_cells() + c];
    CHECK(maps.mean[c] == doctest::Approx(0.5 * (a + b)).epsilon(1e-14));
    CHECK(maps.stddev[c] == doctest::Approx(0.5 * std::fabs(a - b)).epsilon(1e-12));
  }

  const Field g = random_field(GridSpec{16, 4, 4, 1.0}, 72);
  const ClimatologyMaps m2 = spatial_mean_std(g);
  for (std::size_t c = 0; c < g.spec.frame_cells(); ++c) {
    double mean = 0.0;
    for (int t = 0; t < g.spec.n_time; ++t) mean += g.at(t, static_cast<int>(c) / 4, static_cast<int>(c) % 4);
    mean /= g.spec.n_time;
    double var = 0.0;
    for (int t = 0; t < g.spec.n_time; ++t) {
      const double d = g.at(t, static_cast<int>(c) / 4, static_cast<int>(c) % 4) - mean;
      var += d * d;
    }
    var /= g.spec.n_time;
    CHECK(m2.mean[c] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(m2.stddev[c] == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
  }

  const Field constant = Field::constant(GridSpec{4, 4, 4, 1.0}, 3.0);
  const ClimatologyMaps m3 = spatial_mean_std(constant);
  for (double s : m3.stddev) CHECK(s == doctest::Approx(0.0));
}
