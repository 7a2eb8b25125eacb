#include "recon/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "recon/rng.hpp"
#include "recon/synth.hpp"

namespace recon {

namespace {

// stream purposes hung off the root training seed
constexpr uint64_t kStreamInit = 1;
constexpr uint64_t kStreamBatch = 2;

int sigma_bucket_of(double sigma_geo) {
  const int b = static_cast<int>(std::floor(std::log(sigma_geo)));
  return std::clamp(b, -6, 6);
}

}  // namespace

void TrainConfig::validate() const {
  require(p_std >= 0.0, ErrorKind::InvalidArgument, "p_std must be >= 0");
  require(dropout_rate >= 0.0 && dropout_rate <= 0.9, ErrorKind::InvalidArgument,
          "dropout_rate must be in [0, 0.9]");
  require(batch_size >= 1, ErrorKind::InvalidArgument, "batch_size must be >= 1");
  require(n_steps >= 0, ErrorKind::InvalidArgument, "n_steps must be >= 0");
  require(lr > 0.0, ErrorKind::InvalidArgument, "lr must be > 0");
  require(ema_decay >= 0.0 && ema_decay < 1.0, ErrorKind::InvalidArgument,
          "ema_decay must be in [0, 1)");
}

double sample_sigma(const TrainConfig& cfg, uint64_t seed, uint64_t i) {
  Rng rng(derive_seed(seed, i));
  return std::exp(cfg.p_mean + cfg.p_std * rng.normal());
}

MaskField make_train_mask(const MaskField& obs_mask, const TrainConfig& cfg,
                          uint64_t seed) {
  cfg.validate();
  if (cfg.dropout_kind == TrainConfig::Dropout::none || cfg.dropout_rate <= 0.0) {
    return obs_mask;
  }

  const int H = obs_mask.spec.height, W = obs_mask.spec.width;
  const std::size_t fc = obs_mask.spec.frame_cells();
  std::vector<uint8_t> drop2d(fc, 0);  // 1 = dropped by B

  if (cfg.dropout_kind == TrainConfig::Dropout::rects) {
    Rng rng(seed);
    const std::size_t target = static_cast<std::size_t>(cfg.dropout_rate * fc);
    std::size_t dropped = 0;
    for (int iter = 0; iter < 256 && dropped < target; ++iter) {
      const int rh = 1 + static_cast<int>(rng.next_below(std::max(1, H / 2)));
      const int rw = 1 + static_cast<int>(rng.next_below(std::max(1, W / 2)));
      const int ri = static_cast<int>(rng.next_below(H - rh + 1));
      const int rj = static_cast<int>(rng.next_below(W - rw + 1));
      for (int i = ri; i < ri + rh; ++i) {
        for (int j = rj; j < rj + rw; ++j) {
          uint8_t& d = drop2d[static_cast<std::size_t>(i) * W + j];
          if (!d) {
            d = 1;
            ++dropped;
          }
        }
      }
    }
  } else {  // cloudlike
    CloudConfig cloud;
    cloud.spec = GridSpec{1, H, W, obs_mask.spec.dt_hours};
    cloud.correlation_length = std::max(2.0, H / 8.0);
    cloud.temporal_rho = 0.0;
    cloud.seed = seed;
    const Field pattern = gen_cloud(cloud);
    std::vector<double> sorted(pattern.values);
    std::sort(sorted.begin(), sorted.end());
    const double thr = percentile_sorted(sorted, 100.0 * (1.0 - cfg.dropout_rate));
    for (std::size_t i = 0; i < fc; ++i) drop2d[i] = pattern.values[i] >= thr ? 1 : 0;
  }

  MaskField out = obs_mask;
  for (int t = 0; t < obs_mask.spec.n_time; ++t) {
    uint8_t* f = out.flags.data() + static_cast<std::size_t>(t) * fc;
    for (std::size_t i = 0; i < fc; ++i) {
      if (drop2d[i]) f[i] = 0;
    }
  }
  return out;
}

Field extract_window(const Field& seq, int center, int window) {
  const int k = window / 2;
  GridSpec wspec = seq.spec;
  wspec.n_time = window;
  std::vector<double> v(wspec.cells());
  const std::size_t fc = seq.spec.frame_cells();
  for (int d = -k; d <= k; ++d) {
    const int src = std::clamp(center + d, 0, seq.spec.n_time - 1);
    std::copy(seq.frame(src), seq.frame(src) + fc,
              v.begin() + static_cast<std::size_t>(d + k) * fc);
  }
  return Field(wspec, std::move(v));
}

MaskField extract_mask_window(const MaskField& seq, int center, int window) {
  const int k = window / 2;
  GridSpec wspec = seq.spec;
  wspec.n_time = window;
  std::vector<uint8_t> v(wspec.cells());
  const std::size_t fc = seq.spec.frame_cells();
  for (int d = -k; d <= k; ++d) {
    const int src = std::clamp(center + d, 0, seq.spec.n_time - 1);
    std::copy(seq.flags.begin() + static_cast<std::size_t>(src) * fc,
              seq.flags.begin() + static_cast<std::size_t>(src + 1) * fc,
              v.begin() + static_cast<std::size_t>(d + k) * fc);
  }
  return MaskField(wspec, std::move(v));
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write train log: " + path);
  out << "step,loss,sigma_bucket,seconds\n";
  char line[128];
  for (const auto& e : log.entries) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%d,%.6f\n", e.step, e.loss, e.sigma_bucket,
                  e.seconds);
    out << line;
  }
  require(out.good(), ErrorKind::IoError, "short train log write");
}

std::pair<NetParams, TrainLog> train(const std::vector<TrainSequence>& dataset,
                                     const NetConfig& net_cfg, const TrainConfig& cfg) {
  net_cfg.validate();
  cfg.validate();
  require(!dataset.empty(), ErrorKind::InvalidArgument, "dataset must be non-empty");
  for (const auto& seq : dataset) {
    require(seq.mask.spec == seq.field.spec, ErrorKind::ShapeError,
            "sequence mask shape mismatch");
    net_cfg.validate_grid(seq.field.spec.height, seq.field.spec.width);
  }

  LearnedModel model;
  model.config = net_cfg;
  model.params = init_params(net_cfg, derive_seed(cfg.seed, kStreamInit));

  std::vector<double> flat = model.params.flatten();
  std::vector<double> ema = flat;
  std::vector<double> m1(flat.size(), 0.0), m2(flat.size(), 0.0);

  TrainLog log;
  log.entries.reserve(cfg.n_steps);

  for (int step = 0; step < cfg.n_steps; ++step) {
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<TrainSample> batch(cfg.batch_size);
    double log_sigma_sum = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const uint64_t item = static_cast<uint64_t>(step) * cfg.batch_size + b;
      const uint64_t item_seed = derive_seed(derive_seed(cfg.seed, kStreamBatch), item);
      Rng rng(item_seed);

      const std::size_t seq_idx = rng.next_below(dataset.size());
      const TrainSequence& seq = dataset[seq_idx];
      const int center = static_cast<int>(rng.next_below(seq.field.spec.n_time));

      TrainSample& s = batch[b];
      s.window = extract_window(seq.field, center, net_cfg.window);
      s.obs_mask = extract_mask_window(seq.mask, center, net_cfg.window);
      s.train_mask = make_train_mask(s.obs_mask, cfg, derive_seed(item_seed, 1));
      s.sigma = sample_sigma(cfg, derive_seed(item_seed, 2), 0);
      log_sigma_sum += std::log(s.sigma);
      s.noise.resize(s.window.values.size());
      Rng noise_rng(derive_seed(item_seed, 3));
      for (double& x : s.noise) x = noise_rng.normal();
    }

    NetParams grads;
    const double loss = loss_and_grad(model, batch, grads);
    if (!std::isfinite(loss)) {
      raise(ErrorKind::DivergedLoss,
            "non-finite training loss at step " + std::to_string(step));
    }

    double lr_t = cfg.lr;
    if (cfg.lr_schedule == TrainConfig::LrSchedule::cosine && cfg.n_steps > 1) {
      lr_t = cfg.lr * 0.5 * (1.0 + std::cos(M_PI * step / (cfg.n_steps - 1)));
    }

    const std::vector<double> gflat = grads.flatten();
    const double t1 = 1.0 - std::pow(cfg.adam_beta1, step + 1);
    const double t2 = 1.0 - std::pow(cfg.adam_beta2, step + 1);
    for (std::size_t i = 0; i < flat.size(); ++i) {
      m1[i] = cfg.adam_beta1 * m1[i] + (1.0 - cfg.adam_beta1) * gflat[i];
      m2[i] = cfg.adam_beta2 * m2[i] + (1.0 - cfg.adam_beta2) * gflat[i] * gflat[i];
      const double mhat = m1[i] / t1;
      const double vhat = m2[i] / t2;
      flat[i] -= lr_t * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
      ema[i] = cfg.ema_decay * ema[i] + (1.0 - cfg.ema_decay) * flat[i];
    }
    model.params.unflatten(flat);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    log.entries.push_back(TrainLogEntry{
        step, loss, sigma_bucket_of(std::exp(log_sigma_sum / cfg.batch_size)), seconds});
  }

  NetParams result = make_param_layout(net_cfg);
  result.unflatten(ema);
  return {std::move(result), std::move(log)};
}

}  // namespace recon
