#pragma once

#include <string>
#include <variant>
#include <vector>

#include "recon/grid.hpp"
#include "recon/net.hpp"

namespace recon {

// Trained denoiser plus the normalization it was fitted with.
struct LearnedModel {
  NetConfig config;
  NetParams params;
  NormParams norm;
};

// Closed-form posterior-mean denoiser of a diagonal Gaussian N(mu, var).
// mean/var are per-cell (H*W) maps broadcast across window frames, which is
// what the linear-Gaussian oracle suites need. The mask channel is ignored.
struct AnalyticGaussianModel {
  int height = 0;
  int width = 0;
  std::vector<double> mean;
  std::vector<double> var_diag;  // > 0 elementwise

  void validate() const;
};

using ScoreModel = std::variant<LearnedModel, AnalyticGaussianModel>;

// Window length the model consumes: config.window for learned, 1 for the
// analytic model (time-separable, any window length works frame by frame).
int model_window(const ScoreModel& model);

// Clean-window estimate x0_hat of a noisy window at noise level sigma.
// Learned path uses EDM preconditioning:
//   x0 = c_skip * x + c_out * F(c_in * x ++ mask, c_noise)
// with c_skip = sd^2/(s^2+sd^2), c_out = s*sd/sqrt(s^2+sd^2),
// c_in = 1/sqrt(s^2+sd^2), c_noise = ln(s)/4. Windows are Fields whose
// spec.n_time equals the window length.
Field denoise_window(const ScoreModel& model, const Field& noisy,
                     const MaskField& mask, double sigma);

// Tweedie score (x0_hat - x) / sigma^2.
Field score_window(const ScoreModel& model, const Field& noisy, const MaskField& mask,
                   double sigma);

// One training example of the ambient objective.
struct TrainSample {
  Field window;              // x^0 ground-truth window (may contain junk where A=0)
  MaskField obs_mask;        // A: cells whose values are trusted/observed
  MaskField train_mask;      // A~ = A . B: cells exposed to the network
  double sigma = 1.0;
  std::vector<double> noise;  // xi, same shape as window
};

// Ambient score-matching loss with EDM weighting:
//   mean over batch of lambda(sigma) * mean_{A=1} (x0_hat - x^0)^2,
// lambda(sigma) = (s^2 + sd^2) / (s * sd)^2. The network input is
// (x^0 + s*xi) . A~ with A~ concatenated as the mask channel.
// Batch items may be evaluated concurrently; gradients are reduced in batch
// order so results are bit-reproducible.
double loss_and_grad(const LearnedModel& model, const std::vector<TrainSample>& batch,
                     NetParams& grads);

// Forward-only loss for oracles and analytic baselines. Works for any
// ScoreModel, including AnalyticGaussianModel.
double ambient_loss(const ScoreModel& model, const std::vector<TrainSample>& batch);

// Checkpoint container "AODP v1", little-endian: magic, version u32,
// n_sections u32, param count u64, then per tensor [name_len u32, name,
// ndims u32, dims u32...], float32 payload in flatten order, and a UTF-8
// "key = value" footer (u32 length prefix) echoing config and norm.
void write_checkpoint(const LearnedModel& model, const std::string& path);
LearnedModel read_checkpoint(const std::string& path);

}  // namespace recon
