#pragma once

#include <string>
#include <vector>

#include "recon/grid.hpp"

namespace recon {

// Log-normal spatiotemporal proxy field: spectrally shaped Gaussian noise
// (isotropic power ~ k^-beta), AR(1) frame coupling, affine map, then exp.
struct GrfConfig {
  GridSpec spec;
  double spectral_slope = 2.0;  // beta >= 0
  double temporal_rho = 0.8;    // AR(1) frame-to-frame correlation in [0, 1]
  double amplitude = 0.4;
  double offset = -1.0;
  uint64_t seed = 0;

  void validate() const;
};

// Cloud-cover surrogate in [0, 1]: smoothed AR(1) Gaussian field pushed
// through the standard normal CDF, so marginals are approximately uniform.
struct CloudConfig {
  GridSpec spec;
  double correlation_length = 8.0;  // grid cells, >= 1
  double temporal_rho = 0.9;
  uint64_t seed = 0;

  void validate() const;
};

Field gen_grf(const GrfConfig& cfg);
Field gen_cloud(const CloudConfig& cfg);

// Writes n_sequences AODF files (seq_NNN.aodf, per-sequence seed
// derive_seed(cfg.seed, i)) plus manifest.txt with one "path<TAB>seed" line
// per sequence. Returns the manifest path.
std::string make_dataset(const GrfConfig& cfg, int n_sequences, const std::string& out_dir);

// Reads a manifest written by make_dataset and loads every listed field.
std::vector<Field> load_manifest_fields(const std::string& manifest_path);
std::vector<std::string> manifest_paths(const std::string& manifest_path);

}  // namespace recon
