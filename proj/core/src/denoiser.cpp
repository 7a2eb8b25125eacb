#include "recon/denoiser.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "recon/parallel.hpp"

namespace recon {

namespace {

struct EdmCoeffs {
  double c_skip, c_out, c_in, c_noise;
};

EdmCoeffs edm_coeffs(double sigma, double sigma_data) {
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  EdmCoeffs c;
  c.c_skip = d2 / (s2 + d2);
  c.c_out = sigma * sigma_data / std::sqrt(s2 + d2);
  c.c_in = 1.0 / std::sqrt(s2 + d2);
  c.c_noise = std::log(sigma) / 4.0;
  return c;
}

double edm_loss_weight(double sigma, double sigma_data) {
  const double s2 = sigma * sigma;
  const double d2 = sigma_data * sigma_data;
  return (s2 + d2) / (s2 * d2);
}

// (w, 2, H, W) network input: channel 0 = c_in * data, channel 1 = mask.
std::vector<double> build_net_input(const Field& data, const MaskField& mask,
                                    double c_in) {
  const int w = data.spec.n_time, H = data.spec.height, W = data.spec.width;
  const std::size_t fc = data.spec.frame_cells();
  std::vector<double> in(static_cast<std::size_t>(w) * 2 * H * W);
  for (int t = 0; t < w; ++t) {
    double* d0 = in.data() + static_cast<std::size_t>(t) * 2 * fc;
    double* d1 = d0 + fc;
    const double* src = data.frame(t);
    const uint8_t* msk = mask.flags.data() + static_cast<std::size_t>(t) * fc;
    for (std::size_t i = 0; i < fc; ++i) {
      d0[i] = c_in * src[i];
      d1[i] = static_cast<double>(msk[i]);
    }
  }
  return in;
}

Field analytic_denoise(const AnalyticGaussianModel& m, const Field& noisy, double sigma) {
  m.validate();
  require(noisy.spec.height == m.height && noisy.spec.width == m.width,
          ErrorKind::ShapeError, "analytic model grid mismatch");
  const double s2 = sigma * sigma;
  const std::size_t fc = noisy.spec.frame_cells();
  std::vector<double> out(noisy.values.size());
  for (int t = 0; t < noisy.spec.n_time; ++t) {
    const double* x = noisy.frame(t);
    double* o = out.data() + static_cast<std::size_t>(t) * fc;
    for (std::size_t i = 0; i < fc; ++i) {
      o[i] = (m.var_diag[i] * x[i] + s2 * m.mean[i]) / (m.var_diag[i] + s2);
    }
  }
  return Field(noisy.spec, std::move(out));
}

}  // namespace

void AnalyticGaussianModel::validate() const {
  require(height >= 1 && width >= 1, ErrorKind::InvalidArgument, "bad analytic grid");
  const std::size_t fc = static_cast<std::size_t>(height) * width;
  require(mean.size() == fc && var_diag.size() == fc, ErrorKind::ShapeError,
          "analytic model arrays must be (H*W)");
  for (double v : var_diag) {
    require(v > 0.0, ErrorKind::InvalidArgument, "var_diag must be > 0");
  }
}

int model_window(const ScoreModel& model) {
  if (const auto* learned = std::get_if<LearnedModel>(&model)) {
    return learned->config.window;
  }
  return 1;
}

Field denoise_window(const ScoreModel& model, const Field& noisy, const MaskField& mask,
                     double sigma) {
  require(sigma > 0.0, ErrorKind::NonPositiveSigma, "sigma must be > 0");
  require(mask.spec == noisy.spec, ErrorKind::ShapeError, "mask/window shape mismatch");

  if (const auto* ag = std::get_if<AnalyticGaussianModel>(&model)) {
    return analytic_denoise(*ag, noisy, sigma);
  }

  const auto& learned = std::get<LearnedModel>(model);
  require(noisy.spec.n_time == learned.config.window, ErrorKind::ShapeError,
          "window length must equal config.window");
  const EdmCoeffs c = edm_coeffs(sigma, learned.config.sigma_data);
  UNet net(learned.config, noisy.spec.height, noisy.spec.width);
  NetWorkspace ws;
  const auto input = build_net_input(noisy, mask, c.c_in);
  const auto raw = net.forward(learned.params, input, c.c_noise, ws);

  std::vector<double> out(noisy.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = c.c_skip * noisy.values[i] + c.c_out * raw[i];
  }
  return Field(noisy.spec, std::move(out));
}

Field score_window(const ScoreModel& model, const Field& noisy, const MaskField& mask,
                   double sigma) {
  Field x0 = denoise_window(model, noisy, mask, sigma);
  const double inv_s2 = 1.0 / (sigma * sigma);
  for (std::size_t i = 0; i < x0.values.size(); ++i) {
    x0.values[i] = (x0.values[i] - noisy.values[i]) * inv_s2;
  }
  return x0;
}

namespace {

void validate_sample(const TrainSample& s) {
  require(s.obs_mask.spec == s.window.spec && s.train_mask.spec == s.window.spec,
          ErrorKind::ShapeError, "sample mask shapes must match window");
  require(s.noise.size() == s.window.values.size(), ErrorKind::ShapeError,
          "sample noise must match window shape");
  require(s.sigma > 0.0, ErrorKind::NonPositiveSigma, "sample sigma must be > 0");
  for (std::size_t i = 0; i < s.train_mask.flags.size(); ++i) {
    require(s.train_mask.flags[i] <= s.obs_mask.flags[i], ErrorKind::MaskViolation,
            "train mask exposes a cell the observation mask hides");
  }
}

// Noisy masked network input (x^0 + sigma*xi) . A~ as a Field.
Field masked_noisy_input(const TrainSample& s) {
  std::vector<double> v(s.window.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = s.train_mask.flags[i] ? s.window.values[i] + s.sigma * s.noise[i] : 0.0;
  }
  return Field(s.window.spec, std::move(v));
}

}  // namespace

double loss_and_grad(const LearnedModel& model, const std::vector<TrainSample>& batch,
                     NetParams& grads) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "batch must be non-empty");
  grads = make_param_layout(model.config);

  const int B = static_cast<int>(batch.size());
  std::vector<NetParams> item_grads(B);
  std::vector<double> item_loss(B, 0.0);

  parallel_for(B, [&](int b) {
    const TrainSample& s = batch[b];
    validate_sample(s);
    require(s.window.spec.n_time == model.config.window, ErrorKind::ShapeError,
            "sample window length must equal config.window");

    const EdmCoeffs c = edm_coeffs(s.sigma, model.config.sigma_data);
    const double weight = edm_loss_weight(s.sigma, model.config.sigma_data);
    const Field noisy = masked_noisy_input(s);

    UNet net(model.config, s.window.spec.height, s.window.spec.width);
    NetWorkspace ws;
    const auto input = build_net_input(noisy, s.train_mask, c.c_in);
    const auto raw = net.forward(model.params, input, c.c_noise, ws);

    const std::size_t n = s.window.values.size();
    std::size_t n_valid = 0;
    for (uint8_t f : s.obs_mask.flags) n_valid += f;

    item_grads[b] = make_param_layout(model.config);
    if (n_valid == 0) return;  // no trusted cells, no loss, no gradient

    double loss = 0.0;
    std::vector<double> d_raw(n, 0.0);
    const double inv_valid = 1.0 / static_cast<double>(n_valid);
    for (std::size_t i = 0; i < n; ++i) {
      if (s.obs_mask.flags[i] == 0) continue;
      const double x0_hat = c.c_skip * noisy.values[i] + c.c_out * raw[i];
      const double diff = x0_hat - s.window.values[i];
      loss += weight * diff * diff * inv_valid;
      d_raw[i] = weight * 2.0 * diff * inv_valid * c.c_out;
    }
    item_loss[b] = loss;
    net.backward(model.params, ws, d_raw, item_grads[b]);
  });

  // fixed-order reduction
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (int b = 0; b < B; ++b) {
    total += item_loss[b];
    for (std::size_t t = 0; t < grads.tensors.size(); ++t) {
      auto& dst = grads.tensors[t].data;
      const auto& src = item_grads[b].tensors[t].data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] * inv_b;
    }
  }
  return total * inv_b;
}

double ambient_loss(const ScoreModel& model, const std::vector<TrainSample>& batch) {
  require(!batch.empty(), ErrorKind::InvalidArgument, "batch must be non-empty");
  double total = 0.0;
  double sigma_data = 0.5;
  if (const auto* learned = std::get_if<LearnedModel>(&model)) {
    sigma_data = learned->config.sigma_data;
  }
  for (const TrainSample& s : batch) {
    validate_sample(s);
    const Field noisy = masked_noisy_input(s);
    const Field x0_hat = denoise_window(model, noisy, s.train_mask, s.sigma);
    const double weight = edm_loss_weight(s.sigma, sigma_data);
    std::size_t n_valid = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < x0_hat.values.size(); ++i) {
      if (s.obs_mask.flags[i] == 0) continue;
      const double diff = x0_hat.values[i] - s.window.values[i];
      acc += diff * diff;
      ++n_valid;
    }
    if (n_valid > 0) total += weight * acc / static_cast<double>(n_valid);
  }
  return total / static_cast<double>(batch.size());
}

namespace {

constexpr uint32_t kCkptMagic = 0x50444F41u;  // "AODP"
constexpr uint32_t kCkptVersion = 1;

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}
uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}
uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void write_checkpoint(const LearnedModel& model, const std::string& path) {
  model.config.validate();
  model.params.check_finite();

  std::vector<uint8_t> buf;
  put_u32(buf, kCkptMagic);
  put_u32(buf, kCkptVersion);
  put_u32(buf, static_cast<uint32_t>(model.params.tensors.size()));
  put_u64(buf, model.params.total_count());
  for (const auto& t : model.params.tensors) {
    put_u32(buf, static_cast<uint32_t>(t.name.size()));
    buf.insert(buf.end(), t.name.begin(), t.name.end());
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
  }
  for (const auto& t : model.params.tensors) {
    for (double v : t.data) {
      const float f = static_cast<float>(v);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(buf, bits);
    }
  }
  char footer[512];
  std::snprintf(footer, sizeof(footer),
                "window = %d\nbase_channels = %d\nn_levels = %d\nattn_heads = %d\n"
                "sigma_data = %.17g\nq_lo = %.17g\nq_hi = %.17g\n",
                model.config.window, model.config.base_channels, model.config.n_levels,
                model.config.attn_heads, model.config.sigma_data, model.norm.q_lo,
                model.norm.q_hi);
  const std::string ftext(footer);
  put_u32(buf, static_cast<uint32_t>(ftext.size()));
  buf.insert(buf.end(), ftext.begin(), ftext.end());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoError, "cannot open checkpoint for write: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  require(out.good(), ErrorKind::IoError, "short checkpoint write: " + path);
}

LearnedModel read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorKind::IoError, "cannot open checkpoint: " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<uint8_t> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  require(in.good(), ErrorKind::IoError, "short checkpoint read: " + path);

  require(buf.size() >= 20, ErrorKind::FormatError, "truncated checkpoint header");
  require(get_u32(buf.data()) == kCkptMagic, ErrorKind::FormatError,
          "bad checkpoint magic: " + path);
  require(get_u32(buf.data() + 4) == kCkptVersion, ErrorKind::FormatError,
          "unsupported checkpoint version");
  const uint32_t n_sections = get_u32(buf.data() + 8);
  const uint64_t param_count = get_u64(buf.data() + 12);

  std::size_t off = 20;
  NetParams params;
  for (uint32_t s = 0; s < n_sections; ++s) {
    require(off + 4 <= buf.size(), ErrorKind::FormatError, "truncated section table");
    const uint32_t name_len = get_u32(buf.data() + off);
    off += 4;
    require(off + name_len + 4 <= buf.size(), ErrorKind::FormatError,
            "truncated section name");
    std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
    off += name_len;
    const uint32_t ndims = get_u32(buf.data() + off);
    off += 4;
    require(off + 4ull * ndims <= buf.size(), ErrorKind::FormatError, "truncated dims");
    std::vector<int> shape(ndims);
    for (uint32_t d = 0; d < ndims; ++d) {
      shape[d] = static_cast<int>(get_u32(buf.data() + off));
      off += 4;
    }
    ParamTensor t;
    t.name = std::move(name);
    t.shape = std::move(shape);
    t.data.assign(t.count(), 0.0);
    params.tensors.push_back(std::move(t));
  }
  require(params.total_count() == param_count, ErrorKind::FormatError,
          "checkpoint parameter count mismatch");
  require(off + 4ull * param_count + 4 <= buf.size(), ErrorKind::FormatError,
          "truncated checkpoint payload");
  for (auto& t : params.tensors) {
    for (double& v : t.data) {
      const uint32_t bits = get_u32(buf.data() + off);
      off += 4;
      float f;
      std::memcpy(&f, &bits, 4);
      v = static_cast<double>(f);
    }
  }
  const uint32_t footer_len = get_u32(buf.data() + off);
  off += 4;
  require(off + footer_len == buf.size(), ErrorKind::FormatError,
          "checkpoint footer length mismatch");
  const std::string footer(reinterpret_cast<const char*>(buf.data() + off), footer_len);

  LearnedModel model;
  std::istringstream fs(footer);
  std::string line;
  while (std::getline(fs, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, line.find(' '));
    const std::string val = line.substr(eq + 1);
    if (key == "window") model.config.window = std::stoi(val);
    else if (key == "base_channels") model.config.base_channels = std::stoi(val);
    else if (key == "n_levels") model.config.n_levels = std::stoi(val);
    else if (key == "attn_heads") model.config.attn_heads = std::stoi(val);
    else if (key == "sigma_data") model.config.sigma_data = std::stod(val);
    else if (key == "q_lo") model.norm.q_lo = std::stod(val);
    else if (key == "q_hi") model.norm.q_hi = std::stod(val);
  }
  model.config.validate();

  // cross-check the section table against the config-derived layout
  const NetParams layout = make_param_layout(model.config);
  require(layout.tensors.size() == params.tensors.size(), ErrorKind::FormatError,
          "checkpoint layout does not match config");
  for (std::size_t i = 0; i < layout.tensors.size(); ++i) {
    require(layout.tensors[i].name == params.tensors[i].name &&
                layout.tensors[i].shape == params.tensors[i].shape,
            ErrorKind::FormatError, "checkpoint tensor mismatch: " + params.tensors[i].name);
  }
  model.params = std::move(params);
  model.params.check_finite();
  return model;
}

}  // namespace recon
