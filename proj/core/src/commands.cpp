#include "recon/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "recon/field_io.hpp"
#include "recon/metrics.hpp"
#include "recon/oracle.hpp"
#include "recon/rng.hpp"
#include "recon/sampler.hpp"
#include "recon/synth.hpp"
#include "recon/train.hpp"

namespace recon {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::IoError, "cannot create directory: " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot write: " + path);
  out << text;
  require(out.good(), ErrorKind::IoError, "short write: " + path);
}

// Volatile by design; excluded from the byte-identical reproducibility
// contract (see README).
void write_timing(const std::string& dir, double seconds) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "wall_seconds = %.3f\n", seconds);
  write_text(dir + "/timing.txt", buf);
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

GridSpec spec_from_config(const KeyValueBlock& g) {
  GridSpec spec;
  spec.n_time = static_cast<int>(g.require_int("n_time"));
  spec.height = static_cast<int>(g.require_int("height"));
  spec.width = static_cast<int>(g.require_int("width"));
  spec.dt_hours = g.get_real("dt_hours", 1.0);
  spec.validate();
  return spec;
}

TrainConfig::Dropout dropout_from_string(const std::string& s) {
  if (s == "none") return TrainConfig::Dropout::none;
  if (s == "rects") return TrainConfig::Dropout::rects;
  if (s == "cloudlike") return TrainConfig::Dropout::cloudlike;
  raise(ErrorKind::ConfigError, "dropout_kind must be none|rects|cloudlike, got " + s);
}

// ---------------------------------------------------------------- gen-data

int cmd_gen_data(RunConfig& cfg) {
  const auto& g = cfg.globals;
  const std::string out_dir = g.require_str("out_dir");
  const int n_sequences = static_cast<int>(g.require_int("n_sequences"));

  GrfConfig grf;
  grf.spec = spec_from_config(g);
  grf.spectral_slope = g.get_real("beta", 2.0);
  grf.temporal_rho = g.get_real("temporal_rho", 0.8);
  grf.amplitude = g.get_real("amplitude", 0.4);
  grf.offset = g.get_real("offset", -1.0);
  grf.seed = g.get_u64("seed", 0);
  grf.validate();

  const bool make_masks = g.get_bool("make_masks", false);
  CloudConfig cloud;
  double gamma = 0.5;
  if (make_masks) {
    cloud.spec = grf.spec;
    cloud.correlation_length = g.get_real("correlation_length", 8.0);
    cloud.temporal_rho = g.get_real("cloud_rho", 0.9);
    gamma = g.get_real("gamma", 0.5);
    cloud.validate();
  }
  cfg.fail_on_unused();

  ensure_dir(out_dir);
  write_text(out_dir + "/run_manifest.txt", cfg.render_manifest("gen-data"));
  Timer timer;

  const std::string manifest = make_dataset(grf, n_sequences, out_dir);

  if (make_masks) {
    std::ostringstream mask_manifest;
    for (int i = 0; i < n_sequences; ++i) {
      CloudConfig c = cloud;
      c.seed = derive_seed(grf.seed, 0x4D41534Bull + static_cast<uint64_t>(i));
      const MaskField mask = mask_from_cloud(gen_cloud(c), gamma);
      char name[32];
      std::snprintf(name, sizeof(name), "mask_%03d.aodf", i);
      const std::string path = out_dir + "/" + name;
      write_mask(mask, path);
      mask_manifest << path << '\t' << c.seed << '\n';
    }
    write_text(out_dir + "/mask_manifest.txt", mask_manifest.str());
  }

  write_timing(out_dir, timer.seconds());
  std::cout << "gen-data: wrote " << n_sequences << " sequences to " << out_dir
            << " (manifest " << manifest << ")\n";
  return kExitOk;
}

// ------------------------------------------------------------------- train

struct LoadedDataset {
  std::vector<TrainSequence> sequences;  // normalized
  NormParams norm;
};

NormParams fit_normalizer_masked(const std::vector<Field>& fields,
                                 const std::vector<MaskField>& masks) {
  std::vector<double> pooled;
  for (std::size_t s = 0; s < fields.size(); ++s) {
    const Field logged = log_transform(fields[s]);
    for (std::size_t i = 0; i < logged.values.size(); ++i) {
      if (masks[s].flags[i]) pooled.push_back(logged.values[i]);
    }
  }
  require(pooled.size() >= 100, ErrorKind::InvalidArgument,
          "need at least 100 observed values to fit the normalizer");
  std::sort(pooled.begin(), pooled.end());
  NormParams p;
  p.q_lo = percentile_sorted(pooled, 1.0);
  p.q_hi = percentile_sorted(pooled, 99.0);
  require(p.q_hi - p.q_lo >= 1e-9, ErrorKind::DegenerateDistribution,
          "observed values are (near-)constant");
  return p;
}

LoadedDataset load_training_dataset(const std::string& manifest,
                                    const std::string& mask_manifest) {
  LoadedDataset ds;
  std::vector<Field> fields = load_manifest_fields(manifest);
  require(!fields.empty(), ErrorKind::IoError, "dataset manifest lists no fields");

  std::vector<MaskField> masks;
  if (!mask_manifest.empty()) {
    for (const auto& path : manifest_paths(mask_manifest)) masks.push_back(read_mask(path));
    require(masks.size() == fields.size(), ErrorKind::ConfigError,
            "mask manifest length does not match dataset manifest");
    for (std::size_t i = 0; i < fields.size(); ++i) {
      require(masks[i].spec == fields[i].spec, ErrorKind::ShapeError,
              "mask shape mismatch in sequence " + std::to_string(i));
    }
  } else {
    for (const auto& f : fields) masks.push_back(MaskField::ones(f.spec));
  }

  ds.norm = fit_normalizer_masked(fields, masks);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    ds.sequences.push_back(TrainSequence{normalize(fields[i], ds.norm), masks[i]});
  }
  return ds;
}

int cmd_train(RunConfig& cfg) {
  const auto& g = cfg.globals;
  const std::string dataset_manifest = g.require_str("dataset");
  const std::string mask_manifest = g.get_str("mask_manifest", "");
  const std::string checkpoint_out = g.require_str("checkpoint_out");
  const std::string out_dir = fs::path(checkpoint_out).parent_path().string();
  const std::string log_out =
      g.get_str("log_out", (fs::path(out_dir.empty() ? "." : out_dir) / "train_log.csv").string());

  NetConfig net;
  net.window = static_cast<int>(g.get_int("window", 5));
  net.base_channels = static_cast<int>(g.get_int("base_channels", 16));
  net.n_levels = static_cast<int>(g.get_int("n_levels", 2));
  net.attn_heads = static_cast<int>(g.get_int("attn_heads", 2));
  net.sigma_data = g.get_real("sigma_data", 0.5);
  net.validate();

  TrainConfig tc;
  tc.p_mean = g.get_real("p_mean", -1.2);
  tc.p_std = g.get_real("p_std", 1.2);
  tc.dropout_kind = dropout_from_string(g.get_str("dropout_kind", "none"));
  tc.dropout_rate = g.get_real("dropout_rate", 0.0);
  tc.batch_size = static_cast<int>(g.get_int("batch_size", 4));
  tc.n_steps = static_cast<int>(g.get_int("n_steps", 1000));
  tc.lr = g.get_real("lr", 1e-3);
  const std::string sched = g.get_str("lr_schedule", "cosine");
  require(sched == "constant" || sched == "cosine", ErrorKind::ConfigError,
          "lr_schedule must be constant|cosine");
  tc.lr_schedule = sched == "cosine" ? TrainConfig::LrSchedule::cosine
                                     : TrainConfig::LrSchedule::constant;
  tc.seed = g.get_u64("seed", 0);
  tc.ema_decay = g.get_real("ema_decay", 0.999);
  tc.validate();
  cfg.fail_on_unused();

  if (!out_dir.empty()) ensure_dir(out_dir);
  write_text((fs::path(out_dir.empty() ? "." : out_dir) / "run_manifest.txt").string(),
             cfg.render_manifest("train"));
  Timer timer;

  const LoadedDataset ds = load_training_dataset(dataset_manifest, mask_manifest);
  auto [params, log] = train(ds.sequences, net, tc);

  LearnedModel model{net, std::move(params), ds.norm};
  write_checkpoint(model, checkpoint_out);
  write_train_log_csv(log, log_out);
  write_timing(out_dir.empty() ? "." : out_dir, timer.seconds());

  const double final_loss = log.entries.empty() ? 0.0 : log.entries.back().loss;
  std::cout << "train: " << tc.n_steps << " steps, final loss " << final_loss
            << ", checkpoint " << checkpoint_out << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- reconstruct

Observation observation_from_block(const KeyValueBlock& block, const GridSpec& target,
                                   const std::string& base_dir) {
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (fs::path(base_dir) / p).string();
  };
  const std::string kind = block.require_str("kind");
  Observation obs;
  obs.sigma_m = block.get_real("sigma_m", 0.0);
  const double lambda_default =
      obs.sigma_m > 0.0 ? 1.0 / (2.0 * obs.sigma_m * obs.sigma_m) : 1.0;
  obs.lambda_m = block.get_real("lambda_m", lambda_default);
  obs.y = read_field(resolve(block.require_str("y")));
  if (kind == "identity") {
    obs.kind = IdentityOp{};
  } else if (kind == "masking") {
    obs.kind = MaskingOp{read_mask(resolve(block.require_str("mask")))};
  } else if (kind == "downsample") {
    obs.kind = DownsampleOp{static_cast<int>(block.get_int("s_step", 2)),
                            static_cast<int>(block.get_int("t_step", 1))};
  } else {
    raise(ErrorKind::ConfigError, "observation kind must be identity|masking|downsample");
  }
  obs.validate(target);
  return obs;
}

AnnealSchedule schedule_from_config(const KeyValueBlock& g) {
  return AnnealSchedule::karras(static_cast<int>(g.get_int("t_steps", 30)),
                                g.get_real("sigma_max", 80.0),
                                g.get_real("sigma_min", 0.002), g.get_real("rho", 7.0));
}

DapsConfig daps_from_config(const KeyValueBlock& g, uint64_t seed) {
  DapsConfig dc;
  dc.n_langevin = static_cast<int>(g.get_int("n_langevin", 50));
  dc.eta = g.get_real("eta", 5e-2);
  dc.eta_decay = g.get_real("eta_decay", 1.0);
  dc.ode_substeps = static_cast<int>(g.get_int("ode_substeps", 5));
  const std::string rule = g.get_str("sigma_prior_rule", "sigma_tau");
  if (rule == "sigma_tau") {
    dc.sigma_prior_rule = DapsConfig::PriorRule::equal_to_sigma_tau;
  } else if (rule == "constant") {
    dc.sigma_prior_rule = DapsConfig::PriorRule::constant;
    dc.sigma_prior_const = g.get_real("sigma_prior_const", 1.0);
  } else {
    raise(ErrorKind::ConfigError, "sigma_prior_rule must be sigma_tau|constant");
  }
  dc.seed = seed;
  dc.validate();
  return dc;
}

// Ensemble members concatenated along the time axis into one AODF file.
Field concat_samples(const std::vector<Field>& samples) {
  GridSpec spec = samples.front().spec;
  spec.n_time *= static_cast<int>(samples.size());
  std::vector<double> values;
  values.reserve(spec.cells());
  for (const Field& s : samples) {
    values.insert(values.end(), s.values.begin(), s.values.end());
  }
  return Field(spec, std::move(values));
}

int cmd_reconstruct(RunConfig& cfg) {
  const auto& g = cfg.globals;
  const std::string checkpoint = g.require_str("checkpoint");
  const std::string out_dir = g.require_str("out_dir");
  GridSpec target = spec_from_config(g);

  const std::string sampler = g.get_str("sampler", "daps");
  require(sampler == "daps" || sampler == "dps", ErrorKind::ConfigError,
          "sampler must be daps|dps");
  const uint64_t seed = g.get_u64("seed", 0);
  const int n_ensemble = static_cast<int>(g.get_int("n_ensemble", 1));
  require(n_ensemble >= 1, ErrorKind::ConfigError, "n_ensemble must be >= 1");
  const AnnealSchedule schedule = schedule_from_config(g);
  const DapsConfig daps_cfg = daps_from_config(g, seed);
  const double guidance_scale = g.get_real("guidance_scale", 1.0);
  const std::string base_dir = g.get_str("observation_dir", ".");

  LearnedModel learned = read_checkpoint(checkpoint);
  const NormParams norm = learned.norm;
  const ScoreModel model = std::move(learned);

  std::vector<Observation> observations;
  for (const auto& block : cfg.observations) {
    observations.push_back(observation_from_block(block, target, base_dir));
  }
  cfg.fail_on_unused();

  ensure_dir(out_dir);
  write_text(out_dir + "/run_manifest.txt", cfg.render_manifest("reconstruct"));
  Timer timer;

  ReconResult result;
  if (sampler == "dps") {
    result.samples.reserve(n_ensemble);
    for (int m = 0; m < n_ensemble; ++m) {
      result.samples.push_back(dps_reconstruct(model, target, observations, schedule,
                                               guidance_scale, derive_seed(seed, m), norm));
    }
    auto [mean, var] = n_ensemble >= 2
                           ? posterior_sample_stats(result.samples)
                           : std::pair<Field, Field>{result.samples[0],
                                                     Field::zeros(target)};
    for (double& v : var.values) v = std::sqrt(std::max(0.0, v));
    result.mean = std::move(mean);
    result.stddev = std::move(var);
  } else if (n_ensemble == 1) {
    result.samples.push_back(
        daps_reconstruct(model, target, observations, schedule, daps_cfg, norm));
    result.mean = result.samples[0];
    result.stddev = Field::zeros(target);
  } else {
    result = ensemble_reconstruct(model, target, observations, schedule, daps_cfg,
                                  n_ensemble, norm);
  }

  write_field(concat_samples(result.samples), out_dir + "/samples.aodf");
  write_field(result.mean, out_dir + "/mean.aodf");
  write_field(result.stddev, out_dir + "/std.aodf");
  write_timing(out_dir, timer.seconds());
  std::cout << "reconstruct: " << sampler << " wrote " << result.samples.size()
            << " sample(s) to " << out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- evaluate

constexpr const char* kRapsdConvention =
    "# RAPSD convention: frame mean removed; unnormalized forward DFT; power per "
    "integer ring |k| = round(sqrt(kx^2+ky^2)) over the full signed-frequency "
    "spectrum is the ring mean of |F|^2, so sum_k power*count = H*W*sum (v-mean)^2.";

int cmd_evaluate(RunConfig& cfg) {
  const auto& g = cfg.globals;
  const std::string gen_path = g.require_str("gen");
  const std::string gt_path = g.require_str("gt");
  const std::string out_csv = g.require_str("out_csv");
  const bool dump_spectra = g.get_bool("spectra", true);

  const Field gen = read_field(gen_path);
  const Field gt = read_field(gt_path);
  require(gen.spec == gt.spec, ErrorKind::ConfigError,
          "gen and gt shapes differ: evaluation needs matching grids");
  const int default_lag = gt.spec.n_time > 1 ? std::min(8, gt.spec.n_time - 1) : 0;
  const int max_lag = static_cast<int>(g.get_int("max_lag", default_lag));
  cfg.fail_on_unused();

  const std::string out_dir = fs::path(out_csv).parent_path().string();
  if (!out_dir.empty()) ensure_dir(out_dir);
  write_text((fs::path(out_dir.empty() ? "." : out_dir) / "run_manifest.txt").string(),
             cfg.render_manifest("evaluate"));
  Timer timer;

  const double sigma_x = dataset_std(gt);
  require(sigma_x > 0.0, ErrorKind::InvalidArgument, "ground truth is constant");

  std::ostringstream csv;
  csv << kRapsdConvention << "\n";
  csv << "metric,case,value\n";
  char line[160];
  std::snprintf(line, sizeof(line), "nrmse,all,%.12g\n", nrmse(gen, gt, sigma_x));
  csv << line;
  const MelrResult mr = melr_detailed(gen, gt);
  std::snprintf(line, sizeof(line), "melr,all,%.12g\n", mr.value);
  csv << line;
  std::snprintf(line, sizeof(line), "melr_excluded_bins,all,%ld\n", mr.excluded_bins);
  csv << line;
  std::snprintf(line, sizeof(line), "sigma_x,all,%.12g\n", sigma_x);
  csv << line;

  if (max_lag >= 1) {
    const AcfCurve acf_gen = temporal_acf(gen, max_lag);
    const AcfCurve acf_gt = temporal_acf(gt, max_lag);
    for (int l = 0; l <= max_lag; ++l) {
      std::snprintf(line, sizeof(line), "acf_gen,lag%d,%.12g\n", l, acf_gen.values[l]);
      csv << line;
      std::snprintf(line, sizeof(line), "acf_gt,lag%d,%.12g\n", l, acf_gt.values[l]);
      csv << line;
    }
  }
  if (gt.spec.n_time >= 2) {
    const ClimatologyMaps cg = spatial_mean_std(gen);
    const ClimatologyMaps ct = spatial_mean_std(gt);
    double mean_mae = 0.0, std_mae = 0.0;
    for (std::size_t i = 0; i < cg.mean.size(); ++i) {
      mean_mae += std::fabs(cg.mean[i] - ct.mean[i]);
      std_mae += std::fabs(cg.stddev[i] - ct.stddev[i]);
    }
    mean_mae /= static_cast<double>(cg.mean.size());
    std_mae /= static_cast<double>(cg.mean.size());
    std::snprintf(line, sizeof(line), "climatology_mean_mae,all,%.12g\n", mean_mae);
    csv << line;
    std::snprintf(line, sizeof(line), "climatology_std_mae,all,%.12g\n", std_mae);
    csv << line;
  }
  write_text(out_csv, csv.str());

  if (dump_spectra) {
    auto dump = [&](const Field& f, const std::string& path) {
      // time-averaged ring power over frames
      Spectrum acc = rapsd_frame(f, 0);
      std::vector<double> power(acc.power.begin(), acc.power.end());
      for (int t = 1; t < f.spec.n_time; ++t) {
        const Spectrum s = rapsd_frame(f, t);
        for (std::size_t b = 0; b < power.size(); ++b) power[b] += s.power[b];
      }
      std::ostringstream sp;
      sp << kRapsdConvention << "\n";
      sp << "k,power\n";
      for (std::size_t b = 0; b < power.size(); ++b) {
        char l2[64];
        std::snprintf(l2, sizeof(l2), "%d,%.12g\n", acc.wavenumbers[b],
                      power[b] / f.spec.n_time);
        sp << l2;
      }
      write_text(path, sp.str());
    };
    dump(gen, out_csv + ".spectrum_gen.csv");
    dump(gt, out_csv + ".spectrum_gt.csv");
  }

  write_timing(out_dir.empty() ? "." : out_dir, timer.seconds());
  std::cout << "evaluate: wrote " << out_csv << "\n";
  return kExitOk;
}

// --------------------------------------------------------------- benchmark

// Cloud-mask with the missing fraction pinned at `ratio` via the empirical
// quantile of the cloud field.
MaskField ratio_cloud_mask(const GridSpec& spec, double ratio, uint64_t seed) {
  CloudConfig cc;
  cc.spec = spec;
  cc.correlation_length = std::max(2.0, spec.height / 8.0);
  cc.temporal_rho = 0.9;
  cc.seed = seed;
  const Field tcc = gen_cloud(cc);
  std::vector<double> sorted(tcc.values);
  std::sort(sorted.begin(), sorted.end());
  const double gamma = percentile_sorted(sorted, 100.0 * (1.0 - ratio));
  return mask_from_cloud(tcc, std::min(1.0, std::max(0.0, gamma)));
}

int cmd_benchmark(RunConfig& cfg) {
  const auto& g = cfg.globals;
  const std::string ckpt_clean = g.require_str("checkpoint_clean");
  const std::string ckpt_corrupt = g.require_str("checkpoint_corrupt");
  const std::string dataset_manifest = g.require_str("dataset");
  const std::string out_csv = g.require_str("out_csv");
  const int n_time = static_cast<int>(g.get_int("n_time", 6));
  const int n_cases = static_cast<int>(g.get_int("n_cases", 2));
  const uint64_t seed = g.get_u64("seed", 0);
  const double sigma_m = g.get_real("sigma_m", 0.01);

  const auto methods = g.get_str_list("methods", {"daps", "dps"});
  const auto priors = g.get_str_list("priors", {"clean", "corrupt"});
  const auto ratios = g.get_real_list("missing_ratios", {0.45});
  const auto factors = g.get_real_list("ds_factors", {2});
  const AnnealSchedule schedule = schedule_from_config(g);
  const DapsConfig daps_cfg = daps_from_config(g, seed);
  const double guidance_scale = g.get_real("guidance_scale", 1.0);
  cfg.fail_on_unused();

  const std::string out_dir = fs::path(out_csv).parent_path().string();
  if (!out_dir.empty()) ensure_dir(out_dir);
  write_text((fs::path(out_dir.empty() ? "." : out_dir) / "run_manifest.txt").string(),
             cfg.render_manifest("benchmark"));
  Timer timer;

  const std::vector<Field> fields = load_manifest_fields(dataset_manifest);
  require(!fields.empty(), ErrorKind::IoError, "benchmark dataset is empty");

  LearnedModel clean_model = read_checkpoint(ckpt_clean);
  LearnedModel corrupt_model = read_checkpoint(ckpt_corrupt);

  std::ostringstream csv;
  csv << "# DPS rows use the stop-gradient likelihood correction (no "
         "backpropagation through the denoiser); treat its numbers as the "
         "modified-DPS baseline.\n";
  csv << "method,prior,task,param,case,nrmse,melr\n";

  struct Task {
    std::string name;
    double param;
  };
  std::vector<Task> tasks;
  for (double r : ratios) tasks.push_back({"inpaint", r});
  for (double f : factors) tasks.push_back({"downscale", f});

  uint64_t cell = 0;
  for (const auto& method : methods) {
    require(method == "daps" || method == "dps", ErrorKind::ConfigError,
            "methods must be daps|dps");
    for (const auto& prior : priors) {
      require(prior == "clean" || prior == "corrupt", ErrorKind::ConfigError,
              "priors must be clean|corrupt");
      const LearnedModel& m = prior == "clean" ? clean_model : corrupt_model;
      const ScoreModel model = m;
      for (const auto& task : tasks) {
        for (int c = 0; c < n_cases; ++c, ++cell) {
          const Field& full = fields[c % fields.size()];
          require(full.spec.n_time >= n_time, ErrorKind::ConfigError,
                  "benchmark sequences shorter than n_time");
          GridSpec spec = full.spec;
          spec.n_time = n_time;
          Field gt(spec, std::vector<double>(full.values.begin(),
                                             full.values.begin() + spec.cells()));

          const uint64_t cell_seed = derive_seed(seed, cell);
          Observation obs;
          if (task.name == "inpaint") {
            const MaskField mask = ratio_cloud_mask(spec, task.param, cell_seed);
            obs = observe_noisy(OperatorKind{MaskingOp{mask}}, gt, sigma_m,
                                sigma_m > 0 ? 1.0 / (2.0 * sigma_m * sigma_m) : 1.0,
                                derive_seed(cell_seed, 1));
          } else {
            const int s = static_cast<int>(task.param);
            require(s >= 1 && spec.height % s == 0 && spec.width % s == 0,
                    ErrorKind::ConfigError, "ds factor must divide the grid");
            obs = observe_noisy(OperatorKind{DownsampleOp{s, 1}}, gt, sigma_m,
                                sigma_m > 0 ? 1.0 / (2.0 * sigma_m * sigma_m) : 1.0,
                                derive_seed(cell_seed, 1));
          }

          Field recon = Field::zeros(spec);
          if (method == "daps") {
            DapsConfig dc = daps_cfg;
            dc.seed = derive_seed(cell_seed, 2);
            recon = daps_reconstruct(model, spec, {obs}, schedule, dc, m.norm);
          } else {
            recon = dps_reconstruct(model, spec, {obs}, schedule, guidance_scale,
                                    derive_seed(cell_seed, 2), m.norm);
          }

          const double sx = dataset_std(gt);
          char line[192];
          std::snprintf(line, sizeof(line), "%s,%s,%s,%g,%d,%.12g,%.12g\n",
                        method.c_str(), prior.c_str(), task.name.c_str(), task.param, c,
                        nrmse(recon, gt, sx), melr(recon, gt));
          csv << line;
        }
      }
    }
  }
  write_text(out_csv, csv.str());
  write_timing(out_dir.empty() ? "." : out_dir, timer.seconds());
  std::cout << "benchmark: wrote " << out_csv << "\n";
  return kExitOk;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::FormatError:
      return kExitIo;
    case ErrorKind::DivergedLoss:
      return kExitDiverged;
    case ErrorKind::NonFiniteState:
      return kExitNonFinite;
    default:
      return kExitConfig;
  }
}

int run_command(const std::string& command, RunConfig& cfg) {
  try {
    if (command == "gen-data") return cmd_gen_data(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "reconstruct") return cmd_reconstruct(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "benchmark") return cmd_benchmark(cfg);
    std::cerr << "unknown command: " << command << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "recon " << command << ": " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "recon " << command << ": " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace recon
