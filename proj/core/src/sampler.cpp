#include "recon/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "recon/parallel.hpp"
#include "recon/rng.hpp"
#include "recon/train.hpp"

namespace recon {

namespace {

constexpr uint64_t kStreamInit = 0x1000;
constexpr uint64_t kStreamLangevin = 0x2000;
constexpr uint64_t kStreamRenoise = 0x3000;

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

int kind_rank(const OperatorKind& kind) {
  if (std::holds_alternative<IdentityOp>(kind)) return 0;
  if (std::holds_alternative<MaskingOp>(kind)) return 1;
  return 2;
}

// Canonical comparison so daps_reconstruct is invariant to the order the
// caller lists observations in.
bool observation_less(const Observation& a, const Observation& b) {
  const int ra = kind_rank(a.kind), rb = kind_rank(b.kind);
  if (ra != rb) return ra < rb;
  if (const auto* da = std::get_if<DownsampleOp>(&a.kind)) {
    const auto& db = std::get<DownsampleOp>(b.kind);
    if (da->s_step != db.s_step) return da->s_step < db.s_step;
    if (da->t_step != db.t_step) return da->t_step < db.t_step;
  }
  if (a.sigma_m != b.sigma_m) return a.sigma_m < b.sigma_m;
  if (a.lambda_m != b.lambda_m) return a.lambda_m < b.lambda_m;
  if (a.y.values != b.y.values) return a.y.values < b.y.values;
  if (const auto* ma = std::get_if<MaskingOp>(&a.kind)) {
    const auto& mb = std::get<MaskingOp>(b.kind);
    return ma->mask.flags < mb.mask.flags;
  }
  return false;
}

std::vector<double> karras_levels(int n, double smax, double smin, double rho) {
  std::vector<double> s(n);
  const double a = std::pow(smax, 1.0 / rho);
  const double b = std::pow(smin, 1.0 / rho);
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    s[i] = std::pow(a + t * (b - a), rho);
  }
  s[0] = smax;
  if (n > 1) s[n - 1] = smin;
  return s;
}

}  // namespace

AnnealSchedule AnnealSchedule::karras(int n_steps, double sigma_max, double sigma_min,
                                      double rho) {
  require(n_steps >= 2, ErrorKind::ScheduleError, "schedule needs at least 2 levels");
  require(sigma_max > sigma_min && sigma_min > 0.0 && rho > 0.0,
          ErrorKind::InvalidArgument, "invalid schedule parameters");
  AnnealSchedule sched;
  sched.levels = karras_levels(n_steps, sigma_max, sigma_min, rho);
  sched.levels.push_back(0.0);
  sched.validate();
  return sched;
}

void AnnealSchedule::validate() const {
  require(levels.size() >= 3, ErrorKind::ScheduleError,
          "schedule needs at least 2 levels plus terminal 0");
  require(levels.back() == 0.0, ErrorKind::ScheduleError, "terminal level must be 0");
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    require(levels[i] > levels[i + 1], ErrorKind::ScheduleError,
            "levels must decrease strictly");
    require(levels[i] > 0.0, ErrorKind::ScheduleError, "levels must be positive");
  }
}

void DapsConfig::validate() const {
  require(n_langevin >= 0, ErrorKind::InvalidArgument, "n_langevin must be >= 0");
  require(eta > 0.0, ErrorKind::InvalidArgument, "eta must be > 0");
  require(eta_decay > 0.0 && eta_decay <= 1.0, ErrorKind::InvalidArgument,
          "eta_decay must be in (0, 1]");
  require(ode_substeps >= 1, ErrorKind::InvalidArgument, "ode_substeps must be >= 1");
  if (sigma_prior_rule == PriorRule::constant) {
    require(sigma_prior_const > 0.0, ErrorKind::InvalidArgument,
            "sigma_prior_const must be > 0");
  }
}

Field sliding_window_estimate(const ScoreModel& model, const Field& x,
                              const MaskField& mask, double sigma) {
  require(mask.spec == x.spec, ErrorKind::ShapeError, "mask shape mismatch");
  const int w = model_window(model);
  const int k = w / 2;
  Field out = Field::zeros(x.spec);
  const std::size_t fc = x.spec.frame_cells();

  parallel_for(x.spec.n_time, [&](int i) {
    const Field window = extract_window(x, i, w);
    const MaskField mwin = extract_mask_window(mask, i, w);
    const Field x0 = denoise_window(model, window, mwin, sigma);
    std::copy(x0.frame(k), x0.frame(k) + fc, out.values.begin() + i * fc);
  });
  return out;
}

Field prior_estimate(const ScoreModel& model, const Field& x_tau, const MaskField& mask,
                     double sigma_tau, int ode_substeps, double sigma_floor) {
  require(sigma_tau > 0.0, ErrorKind::NonPositiveSigma, "sigma_tau must be > 0");
  require(ode_substeps >= 1, ErrorKind::InvalidArgument, "ode_substeps must be >= 1");
  if (ode_substeps == 1 || sigma_tau <= sigma_floor) {
    return sliding_window_estimate(model, x_tau, mask, std::max(sigma_tau, sigma_floor));
  }

  const auto subs = karras_levels(ode_substeps, sigma_tau, sigma_floor, 7.0);
  Field x = x_tau;
  for (int j = 0; j + 1 < ode_substeps; ++j) {
    const double s = subs[j], s_next = subs[j + 1];
    const Field x0 = sliding_window_estimate(model, x, mask, s);
    const double h = s_next - s;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
      x.values[i] += h * (x.values[i] - x0.values[i]) / s;
    }
    require(all_finite(x.values), ErrorKind::NonFiniteState,
            "probability-flow state became non-finite");
  }
  return sliding_window_estimate(model, x, mask, sigma_floor);
}

Field langevin_guidance(const Field& x0_init, const std::vector<Observation>& observations,
                        double sigma_prior, const DapsConfig& cfg, uint64_t seed) {
  cfg.validate();
  require(sigma_prior > 0.0, ErrorKind::NonPositiveSigma, "sigma_prior must be > 0");
  for (const auto& obs : observations) obs.validate(x0_init.spec);

  if (cfg.n_langevin == 0) return x0_init;

  const double eta = cfg.eta;
  const double noise_scale = std::sqrt(2.0 * eta);
  const double inv_sp2 = 1.0 / (sigma_prior * sigma_prior);
  Rng rng(seed);

  std::vector<double> x = x0_init.values;
  for (int it = 0; it < cfg.n_langevin; ++it) {
    std::vector<double> grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      grad[i] = (x[i] - x0_init.values[i]) * inv_sp2;
    }
    if (!observations.empty()) {
      const Field xf(x0_init.spec, x);
      for (const auto& obs : observations) {
        if (obs.lambda_m == 0.0) continue;
        const Field g = fidelity_grad(obs, xf);
        for (std::size_t i = 0; i < x.size(); ++i) grad[i] += obs.lambda_m * g.values[i];
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += -eta * grad[i] + noise_scale * rng.normal();
    }
    require(all_finite(x), ErrorKind::NonFiniteState, "Langevin state became non-finite");
  }
  return Field(x0_init.spec, std::move(x));
}

Observation normalize_observation(const Observation& obs, const NormParams& norm) {
  norm.validate();
  Observation out = obs;
  if (const auto* m = std::get_if<MaskingOp>(&obs.kind)) {
    for (std::size_t i = 0; i < out.y.values.size(); ++i) {
      out.y.values[i] = m->mask.flags[i] ? normalize_value(obs.y.values[i], norm) : 0.0;
    }
    out.y.check_finite();
  } else {
    out.y = normalize(obs.y, norm);
  }
  return out;
}

MaskField guidance_mask(const std::vector<Observation>& observations,
                        const GridSpec& target) {
  bool any_masking = false;
  MaskField mask(target, std::vector<uint8_t>(target.cells(), 0));
  for (const auto& obs : observations) {
    if (const auto* m = std::get_if<MaskingOp>(&obs.kind)) {
      any_masking = true;
      for (std::size_t i = 0; i < mask.flags.size(); ++i) {
        mask.flags[i] = mask.flags[i] | m->mask.flags[i];
      }
    }
  }
  return any_masking ? mask : MaskField::ones(target);
}

namespace {

struct PreparedObservations {
  std::vector<Observation> normalized;
  MaskField mask;
};

PreparedObservations prepare_observations(const std::vector<Observation>& observations,
                                          const GridSpec& target, const NormParams& norm) {
  PreparedObservations prep{{}, MaskField::ones(target)};
  prep.normalized.reserve(observations.size());
  for (const auto& obs : observations) {
    obs.validate(target);
    prep.normalized.push_back(normalize_observation(obs, norm));
  }
  std::sort(prep.normalized.begin(), prep.normalized.end(), observation_less);
  prep.mask = guidance_mask(prep.normalized, target);
  return prep;
}

void check_model_grid(const ScoreModel& model, const GridSpec& target) {
  if (const auto* learned = std::get_if<LearnedModel>(&model)) {
    learned->config.validate_grid(target.height, target.width);
  } else {
    const auto& ag = std::get<AnalyticGaussianModel>(model);
    require(ag.height == target.height && ag.width == target.width, ErrorKind::ShapeError,
            "analytic model grid does not match target");
  }
}

}  // namespace

Field daps_reconstruct(const ScoreModel& model, const GridSpec& target,
                       const std::vector<Observation>& observations,
                       const AnnealSchedule& schedule, const DapsConfig& cfg,
                       const NormParams& norm, const DapsObserver* observer) {
  schedule.validate();
  cfg.validate();
  target.validate();
  check_model_grid(model, target);
  const PreparedObservations prep = prepare_observations(observations, target, norm);

  const int T = schedule.n_steps();
  Rng init_rng(derive_seed(cfg.seed, kStreamInit));
  std::vector<double> xv(target.cells());
  for (double& v : xv) v = schedule.levels[0] * init_rng.normal();
  Field x(target, std::move(xv));

  Field x0_guided = Field::zeros(target);
  for (int step = 0; step < T; ++step) {
    const double sigma_tau = schedule.levels[step];
    const double sigma_next = schedule.levels[step + 1];

    Field x0 = prior_estimate(model, x, prep.mask, sigma_tau, cfg.ode_substeps,
                              schedule.sigma_min());

    const double sp = cfg.sigma_prior(sigma_tau);
    DapsConfig lcfg = cfg;
    lcfg.eta = cfg.eta * (sp * sp) / (1.0 + sp * sp) * std::pow(cfg.eta_decay, step);
    x0_guided = langevin_guidance(x0, prep.normalized, sp, lcfg,
                                  derive_seed(cfg.seed, kStreamLangevin + step));

    if (sigma_next > 0.0) {
      Rng renoise_rng(derive_seed(cfg.seed, kStreamRenoise + step));
      std::vector<double> next(x0_guided.values.size());
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = x0_guided.values[i] + sigma_next * renoise_rng.normal();
      }
      require(all_finite(next), ErrorKind::NonFiniteState, "sampler state non-finite");
      x = Field(target, std::move(next));
    } else {
      x = x0_guided;
    }
    if (observer != nullptr) {
      DapsStepInfo info;
      info.step = step;
      info.sigma_tau = sigma_tau;
      info.sigma_next = sigma_next;
      info.x0_guided = &x0_guided;
      info.x_next = &x;
      (*observer)(info);
    }
  }
  return denormalize(x0_guided, norm);
}

Field dps_reconstruct(const ScoreModel& model, const GridSpec& target,
                      const std::vector<Observation>& observations,
                      const AnnealSchedule& schedule, double guidance_scale, uint64_t seed,
                      const NormParams& norm) {
  schedule.validate();
  target.validate();
  require(guidance_scale >= 0.0, ErrorKind::InvalidArgument,
          "guidance_scale must be >= 0");
  check_model_grid(model, target);
  const PreparedObservations prep = prepare_observations(observations, target, norm);

  Rng init_rng(derive_seed(seed, kStreamInit));
  std::vector<double> xv(target.cells());
  for (double& v : xv) v = schedule.levels[0] * init_rng.normal();
  Field x(target, std::move(xv));

  for (int step = 0; step < schedule.n_steps(); ++step) {
    const double s = schedule.levels[step];
    const double s_next = schedule.levels[step + 1];
    const Field x0 = sliding_window_estimate(model, x, prep.mask, s);

    std::vector<double> next(x.values.size());
    const double h = s_next - s;
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = x.values[i] + h * (x.values[i] - x0.values[i]) / s;
    }
    if (guidance_scale > 0.0) {
      for (const auto& obs : prep.normalized) {
        const Field ax = apply_operator(obs.kind, x0);
        double r2 = 0.0;
        for (std::size_t i = 0; i < ax.values.size(); ++i) {
          const double d = ax.values[i] - obs.y.values[i];
          r2 += d * d;
        }
        const double r = std::sqrt(r2);
        if (r < 1e-12) continue;
        const double zeta = guidance_scale / r;
        const Field g = fidelity_grad(obs, x0);
        for (std::size_t i = 0; i < next.size(); ++i) {
          next[i] -= zeta * obs.lambda_m * g.values[i];
        }
      }
    }
    require(all_finite(next), ErrorKind::NonFiniteState, "sampler state non-finite");
    x = Field(target, std::move(next));
  }
  return denormalize(x, norm);
}

Field unconditional_sample(const ScoreModel& model, const AnnealSchedule& schedule,
                           const GridSpec& target, uint64_t seed, const NormParams& norm) {
  DapsConfig cfg;
  cfg.n_langevin = 0;
  cfg.seed = seed;
  return daps_reconstruct(model, target, {}, schedule, cfg, norm);
}

ReconResult ensemble_reconstruct(const ScoreModel& model, const GridSpec& target,
                                 const std::vector<Observation>& observations,
                                 const AnnealSchedule& schedule, const DapsConfig& cfg,
                                 int n_ensemble, const NormParams& norm,
                                 const std::vector<uint64_t>& member_seeds) {
  require(n_ensemble >= 2, ErrorKind::InvalidArgument, "n_ensemble must be >= 2");
  require(member_seeds.empty() || member_seeds.size() == static_cast<std::size_t>(n_ensemble),
          ErrorKind::InvalidArgument, "member_seeds must be empty or n_ensemble long");

  ReconResult result;
  result.samples.assign(n_ensemble, Field());
  parallel_for(n_ensemble, [&](int member) {
    DapsConfig mcfg = cfg;
    mcfg.seed = member_seeds.empty() ? derive_seed(cfg.seed, static_cast<uint64_t>(member))
                                     : member_seeds[member];
    result.samples[member] =
        daps_reconstruct(model, target, observations, schedule, mcfg, norm);
  });

  const double n = static_cast<double>(n_ensemble);
  std::vector<double> mean(target.cells(), 0.0), var(target.cells(), 0.0);
  for (const Field& s : result.samples) {
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += s.values[i];
  }
  for (double& m : mean) m /= n;
  for (const Field& s : result.samples) {
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double d = s.values[i] - mean[i];
      var[i] += d * d;
    }
  }
  for (double& v : var) v = std::sqrt(v / n);
  result.mean = Field(target, std::move(mean));
  result.stddev = Field(target, std::move(var));
  return result;
}

}  // namespace recon
