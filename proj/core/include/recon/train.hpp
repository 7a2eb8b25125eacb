#pragma once

#include <string>
#include <utility>
#include <vector>

#include "recon/denoiser.hpp"

namespace recon {

struct TrainConfig {
  // log-normal noise sampler: sigma = exp(p_mean + p_std * z)
  double p_mean = -1.2;
  double p_std = 1.2;

  enum class Dropout { none, rects, cloudlike };
  Dropout dropout_kind = Dropout::none;
  double dropout_rate = 0.0;  // fraction of cells hidden by the extra mask B

  int batch_size = 4;
  int n_steps = 1000;
  double lr = 1e-3;
  enum class LrSchedule { constant, cosine };
  LrSchedule lr_schedule = LrSchedule::constant;
  uint64_t seed = 0;

  double ema_decay = 0.999;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  int sigma_bucket = 0;  // floor(ln sigma_geo) of the step's batch, clamped
  double seconds = 0.0;  // wall time of the step (diagnostic, not reproducible)
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
};

// CSV "step,loss,sigma_bucket,seconds".
void write_train_log_csv(const TrainLog& log, const std::string& path);

// sigma = exp(p_mean + p_std * z), z standard normal, deterministic per (seed, i).
double sample_sigma(const TrainConfig& cfg, uint64_t seed, uint64_t i);

// A~ = A . B where B is the extra dropout pattern of cfg.dropout_kind, one 2D
// pattern broadcast across the window's frames. rects zeroes random
// axis-aligned rectangles until ~dropout_rate of cells are hit; cloudlike
// thresholds a smooth noise pattern at the rate's quantile.
MaskField make_train_mask(const MaskField& obs_mask, const TrainConfig& cfg, uint64_t seed);

// One training sequence: normalized field values plus its observation mask A.
struct TrainSequence {
  Field field;
  MaskField mask;
};

// Ambient training loop: per step draws (sequence, center) windows uniformly
// with frame-replication padding at the ends, per-item sigma/noise/B, then an
// Adam update and an EMA of the parameters (returned as the result).
std::pair<NetParams, TrainLog> train(const std::vector<TrainSequence>& dataset,
                                     const NetConfig& net_cfg, const TrainConfig& cfg);

// Window extraction with replication padding, shared with the sampler side.
Field extract_window(const Field& seq, int center, int window);
MaskField extract_mask_window(const MaskField& seq, int center, int window);

}  // namespace recon
