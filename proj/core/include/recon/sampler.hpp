#pragma once

#include <functional>

#include "recon/denoiser.hpp"
#include "recon/observe.hpp"

namespace recon {

// Decreasing noise levels sigma_1 > ... > sigma_T plus a terminal 0.
struct AnnealSchedule {
  std::vector<double> levels;

  // sigma_i = (smax^(1/rho) + (i-1)/(T-1) * (smin^(1/rho) - smax^(1/rho)))^rho
  static AnnealSchedule karras(int n_steps, double sigma_max = 80.0,
                               double sigma_min = 0.002, double rho = 7.0);

  int n_steps() const { return static_cast<int>(levels.size()) - 1; }
  double sigma_min() const { return levels[levels.size() - 2]; }
  double sigma_max() const { return levels.front(); }
  void validate() const;
};

struct DapsConfig {
  int n_langevin = 50;
  // Base Langevin rate. langevin_guidance uses eta literally as the step
  // size; daps_reconstruct scales it per annealing level to
  //   eta * sp^2 / (1 + sp^2) * eta_decay^step,  sp = sigma_prior(sigma_tau),
  // which keeps the prior-consistency update stable across the whole anneal.
  double eta = 5e-2;
  double eta_decay = 1.0;
  enum class PriorRule { equal_to_sigma_tau, constant };
  PriorRule sigma_prior_rule = PriorRule::equal_to_sigma_tau;
  double sigma_prior_const = 1.0;
  int ode_substeps = 5;
  uint64_t seed = 0;

  double sigma_prior(double sigma_tau) const {
    return sigma_prior_rule == PriorRule::equal_to_sigma_tau ? sigma_tau
                                                             : sigma_prior_const;
  }
  void validate() const;
};

struct ReconResult {
  std::vector<Field> samples;  // denormalized ensemble members
  Field mean;
  Field stddev;  // population std over members, per cell
};

// Per-frame clean estimate assembled from local windows: each frame's window
// (frame-replication padding at the ends) runs through the model and only the
// center frame of the prediction is kept. The mask is the guidance-time
// validity mask (all-ones when no masking observation constrains the run).
Field sliding_window_estimate(const ScoreModel& model, const Field& x,
                              const MaskField& mask, double sigma);

// Probability-flow ODE estimate of the clean field from (x_tau, sigma_tau):
// Euler steps dx/dsigma = (x - x0_hat)/sigma on a Karras-spaced sub-schedule
// from sigma_tau down to sigma_floor, then a final Tweedie jump. With
// ode_substeps == 1 this degenerates to the single Tweedie estimate at
// sigma_tau.
Field prior_estimate(const ScoreModel& model, const Field& x_tau, const MaskField& mask,
                     double sigma_tau, int ode_substeps, double sigma_floor = 0.002);

// Langevin iterations x <- x - eta * grad J + sqrt(2 eta) xi with
//   grad J = (x - x0_init)/sigma_prior^2 + sum_m lambda_m grad||A_m x - y_m||^2.
// Observations must already live in the model's (normalized) space; cfg.eta
// is used literally as the step size.
Field langevin_guidance(const Field& x0_init, const std::vector<Observation>& observations,
                        double sigma_prior, const DapsConfig& cfg, uint64_t seed);

// Per-outer-step state exposed to instrumentation callbacks.
struct DapsStepInfo {
  int step = 0;
  double sigma_tau = 0.0;
  double sigma_next = 0.0;
  const Field* x0_guided = nullptr;  // x0^y, normalized space
  const Field* x_next = nullptr;     // state after re-noising
};
using DapsObserver = std::function<void(const DapsStepInfo&)>;

// Full decoupled-annealing posterior sampler. Observations carry raw-space y
// and are normalized internally (masking: only observed cells). Returns the
// denormalized reconstruction. Deterministic per cfg.seed; the observation
// list is sorted canonically so permutations cannot change the result.
Field daps_reconstruct(const ScoreModel& model, const GridSpec& target,
                       const std::vector<Observation>& observations,
                       const AnnealSchedule& schedule, const DapsConfig& cfg,
                       const NormParams& norm, const DapsObserver* observer = nullptr);

// Step-wise guidance baseline: reverse Euler on the probability-flow ODE with
// a stop-gradient likelihood correction after each step,
//   x <- x - (scale/||A_m(x0_hat)-y_m||) * lambda_m * grad_m(x0_hat),
// using x0_hat as a constant (no backpropagation through the denoiser).
Field dps_reconstruct(const ScoreModel& model, const GridSpec& target,
                      const std::vector<Observation>& observations,
                      const AnnealSchedule& schedule, double guidance_scale, uint64_t seed,
                      const NormParams& norm);

// daps_reconstruct with no observations and no Langevin phase.
Field unconditional_sample(const ScoreModel& model, const AnnealSchedule& schedule,
                           const GridSpec& target, uint64_t seed, const NormParams& norm);

// n_ensemble independent daps runs (seeds derive_seed(cfg.seed, member) unless
// member_seeds overrides them); mean/std computed in denormalized space.
ReconResult ensemble_reconstruct(const ScoreModel& model, const GridSpec& target,
                                 const std::vector<Observation>& observations,
                                 const AnnealSchedule& schedule, const DapsConfig& cfg,
                                 int n_ensemble, const NormParams& norm,
                                 const std::vector<uint64_t>& member_seeds = {});

// Observation with y mapped into normalized space (masking: observed cells
// only; downsample: block means normalized directly, a documented
// approximation since log of a mean is not the mean of logs).
Observation normalize_observation(const Observation& obs, const NormParams& norm);

// Validity mask fed to the model: union of masking-observation masks, or
// all-ones when none constrain the run.
MaskField guidance_mask(const std::vector<Observation>& observations,
                        const GridSpec& target);

}  // namespace recon
