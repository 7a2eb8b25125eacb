#include "recon/synth.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "recon/fft.hpp"
#include "recon/field_io.hpp"
#include "recon/rng.hpp"

namespace recon {

namespace {

// White real Gaussian frame -> forward DFT -> radial filter -> inverse DFT,
// rescaled so each cell has unit marginal variance. filter(0) handling is
// the caller's: grf zeroes the DC term, cloud keeps it.
std::vector<double> shaped_innovation(Rng& rng, int h, int w,
                                      const std::vector<double>& filter) {
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> white(n);
  for (std::size_t i = 0; i < n; ++i) white[i] = rng.normal();

  auto spec = fft2(white, h, w);
  double filter_energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    spec[i] *= filter[i];
    filter_energy += filter[i] * filter[i];
  }
  // Var(cell) = filter_energy / n for a unit-variance white input.
  const double scale = std::sqrt(static_cast<double>(n) / filter_energy);
  auto field = ifft2_real(spec, h, w);
  for (double& v : field) v *= scale;
  return field;
}

std::vector<double> radial_powerlaw_filter(int h, int w, double beta) {
  std::vector<double> filter(static_cast<std::size_t>(h) * w);
  for (int ky = 0; ky < h; ++ky) {
    const double fy = signed_freq(ky, h);
    for (int kx = 0; kx < w; ++kx) {
      const double fx = signed_freq(kx, w);
      const double k = std::sqrt(fy * fy + fx * fx);
      filter[static_cast<std::size_t>(ky) * w + kx] =
          k == 0.0 ? 0.0 : std::pow(k, -beta / 2.0);
    }
  }
  return filter;
}

std::vector<double> radial_gaussian_filter(int h, int w, double corr_len) {
  std::vector<double> filter(static_cast<std::size_t>(h) * w);
  const double ref = static_cast<double>(std::max(h, w));
  for (int ky = 0; ky < h; ++ky) {
    const double fy = signed_freq(ky, h);
    for (int kx = 0; kx < w; ++kx) {
      const double fx = signed_freq(kx, w);
      const double k2 = fy * fy + fx * fx;
      const double arg = 2.0 * M_PI * M_PI * k2 * corr_len * corr_len / (ref * ref);
      filter[static_cast<std::size_t>(ky) * w + kx] = std::exp(-arg);
    }
  }
  return filter;
}

// Gaussian sequence with the given spatial filter and AR(1) time coupling.
std::vector<double> ar1_sequence(const GridSpec& spec, double rho, uint64_t seed,
                                 const std::vector<double>& filter) {
  const std::size_t fc = spec.frame_cells();
  std::vector<double> out(spec.cells());
  Rng rng(seed);
  std::vector<double> state = shaped_innovation(rng, spec.height, spec.width, filter);
  std::copy(state.begin(), state.end(), out.begin());
  const double innov_scale = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (int t = 1; t < spec.n_time; ++t) {
    const auto innovation = shaped_innovation(rng, spec.height, spec.width, filter);
    for (std::size_t i = 0; i < fc; ++i) {
      state[i] = rho * state[i] + innov_scale * innovation[i];
    }
    std::copy(state.begin(), state.end(), out.begin() + static_cast<std::size_t>(t) * fc);
  }
  return out;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

}  // namespace

void GrfConfig::validate() const {
  spec.validate();
  require(spectral_slope >= 0.0, ErrorKind::InvalidArgument, "beta must be >= 0");
  require(temporal_rho >= 0.0 && temporal_rho <= 1.0, ErrorKind::InvalidArgument,
          "temporal_rho must be in [0, 1]");
  require(amplitude > 0.0, ErrorKind::InvalidArgument, "amplitude must be > 0");
}

void CloudConfig::validate() const {
  spec.validate();
  require(correlation_length >= 1.0, ErrorKind::InvalidArgument,
          "correlation_length must be >= 1");
  require(temporal_rho >= 0.0 && temporal_rho <= 1.0, ErrorKind::InvalidArgument,
          "temporal_rho must be in [0, 1]");
}

Field gen_grf(const GrfConfig& cfg) {
  cfg.validate();
  const auto filter =
      radial_powerlaw_filter(cfg.spec.height, cfg.spec.width, cfg.spectral_slope);
  auto values = ar1_sequence(cfg.spec, cfg.temporal_rho, cfg.seed, filter);
  for (double& v : values) v = std::exp(cfg.amplitude * v + cfg.offset);
  return Field(cfg.spec, std::move(values));
}

Field gen_cloud(const CloudConfig& cfg) {
  cfg.validate();
  const auto filter =
      radial_gaussian_filter(cfg.spec.height, cfg.spec.width, cfg.correlation_length);
  auto values = ar1_sequence(cfg.spec, cfg.temporal_rho, cfg.seed, filter);
  for (double& v : values) v = normal_cdf(v);
  return Field(cfg.spec, std::move(values));
}

std::string make_dataset(const GrfConfig& cfg, int n_sequences, const std::string& out_dir) {
  cfg.validate();
  require(n_sequences >= 0, ErrorKind::InvalidArgument, "n_sequences must be >= 0");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::IoError, "cannot create output dir: " + out_dir);

  const std::string manifest_path = out_dir + "/manifest.txt";
  std::ostringstream manifest;
  for (int i = 0; i < n_sequences; ++i) {
    GrfConfig seq_cfg = cfg;
    seq_cfg.seed = derive_seed(cfg.seed, static_cast<uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%03d.aodf", i);
    const std::string path = out_dir + "/" + name;
    write_field(gen_grf(seq_cfg), path);
    manifest << path << '\t' << seq_cfg.seed << '\n';
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write manifest: " + manifest_path);
  out << manifest.str();
  require(out.good(), ErrorKind::IoError, "short manifest write");
  return manifest_path;
}

std::vector<std::string> manifest_paths(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  require(in.good(), ErrorKind::IoError, "cannot open manifest: " + manifest_path);
  std::vector<std::string> paths;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    paths.push_back(tab == std::string::npos ? line : line.substr(0, tab));
  }
  return paths;
}

std::vector<Field> load_manifest_fields(const std::string& manifest_path) {
  std::vector<Field> fields;
  for (const auto& path : manifest_paths(manifest_path)) {
    fields.push_back(read_field(path));
  }
  return fields;
}

}  // namespace recon
