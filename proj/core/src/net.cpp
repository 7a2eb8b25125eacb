#include "recon/net.hpp"

#include <algorithm>
#include <cmath>

#include "recon/rng.hpp"

namespace recon {

namespace {

constexpr double kGnEps = 1e-6;

struct ConvDims {
  int frames, cin, h, w, cout, ho, wo, k, stride;
};

ConvDims conv_dims(int frames, int cin, int h, int w, int cout, int k, int stride) {
  return ConvDims{frames, cin, h, w, cout, h / stride, w / stride, k, stride};
}

void conv_fwd(const ConvDims& d, const double* in, const double* W, const double* B,
              double* out) {
  const int pad = d.k / 2;
  const std::size_t in_frame = static_cast<std::size_t>(d.cin) * d.h * d.w;
  const std::size_t out_frame = static_cast<std::size_t>(d.cout) * d.ho * d.wo;
  for (int f = 0; f < d.frames; ++f) {
    const double* inF = in + f * in_frame;
    double* outF = out + f * out_frame;
    for (int co = 0; co < d.cout; ++co) {
      double* plane = outF + static_cast<std::size_t>(co) * d.ho * d.wo;
      const double bias = B[co];
      for (int i = 0; i < d.ho * d.wo; ++i) plane[i] = bias;
    }
    for (int co = 0; co < d.cout; ++co) {
      double* outPlane = outF + static_cast<std::size_t>(co) * d.ho * d.wo;
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* inPlane = inF + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
          for (int kx = 0; kx < d.k; ++kx) {
            const double wv =
                W[((static_cast<std::size_t>(co) * d.cin + ci) * d.k + ky) * d.k + kx];
            int oy_lo = 0, oy_hi = d.ho - 1;
            while (oy_lo <= oy_hi && oy_lo * d.stride + ky - pad < 0) ++oy_lo;
            while (oy_hi >= oy_lo && oy_hi * d.stride + ky - pad >= d.h) --oy_hi;
            int ox_lo = 0, ox_hi = d.wo - 1;
            while (ox_lo <= ox_hi && ox_lo * d.stride + kx - pad < 0) ++ox_lo;
            while (ox_hi >= ox_lo && ox_hi * d.stride + kx - pad >= d.w) --ox_hi;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * d.stride + ky - pad;
              const double* inRow =
                  inPlane + static_cast<std::size_t>(iy) * d.w + (kx - pad);
              double* outRow = outPlane + static_cast<std::size_t>(oy) * d.wo;
              if (d.stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) outRow[ox] += wv * inRow[ox];
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  outRow[ox] += wv * inRow[static_cast<std::size_t>(ox) * d.stride];
                }
              }
            }
          }
        }
      }
    }
  }
}

void conv_bwd(const ConvDims& d, const double* in, const double* W, const double* dout,
              double* din, double* dW, double* dB) {
  const int pad = d.k / 2;
  const std::size_t in_frame = static_cast<std::size_t>(d.cin) * d.h * d.w;
  const std::size_t out_frame = static_cast<std::size_t>(d.cout) * d.ho * d.wo;
  for (int f = 0; f < d.frames; ++f) {
    const double* inF = in + f * in_frame;
    const double* doutF = dout + f * out_frame;
    double* dinF = din == nullptr ? nullptr : din + f * in_frame;
    for (int co = 0; co < d.cout; ++co) {
      const double* doutPlane = doutF + static_cast<std::size_t>(co) * d.ho * d.wo;
      double acc = 0.0;
      for (int i = 0; i < d.ho * d.wo; ++i) acc += doutPlane[i];
      dB[co] += acc;
      for (int ci = 0; ci < d.cin; ++ci) {
        const double* inPlane = inF + static_cast<std::size_t>(ci) * d.h * d.w;
        double* dinPlane =
            dinF == nullptr ? nullptr : dinF + static_cast<std::size_t>(ci) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
          for (int kx = 0; kx < d.k; ++kx) {
            int oy_lo = 0, oy_hi = d.ho - 1;
            while (oy_lo <= oy_hi && oy_lo * d.stride + ky - pad < 0) ++oy_lo;
            while (oy_hi >= oy_lo && oy_hi * d.stride + ky - pad >= d.h) --oy_hi;
            int ox_lo = 0, ox_hi = d.wo - 1;
            while (ox_lo <= ox_hi && ox_lo * d.stride + kx - pad < 0) ++ox_lo;
            while (ox_hi >= ox_lo && ox_hi * d.stride + kx - pad >= d.w) --ox_hi;
            const std::size_t w_idx =
                ((static_cast<std::size_t>(co) * d.cin + ci) * d.k + ky) * d.k + kx;
            const double wv = W[w_idx];
            double gw = 0.0;
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const int iy = oy * d.stride + ky - pad;
              const double* inRow =
                  inPlane + static_cast<std::size_t>(iy) * d.w + (kx - pad);
              const double* doutRow = doutPlane + static_cast<std::size_t>(oy) * d.wo;
              double* dinRow = dinPlane == nullptr
                                   ? nullptr
                                   : dinPlane + static_cast<std::size_t>(iy) * d.w + (kx - pad);
              if (d.stride == 1) {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  gw += inRow[ox] * doutRow[ox];
                  if (dinRow != nullptr) dinRow[ox] += wv * doutRow[ox];
                }
              } else {
                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                  const std::size_t ix = static_cast<std::size_t>(ox) * d.stride;
                  gw += inRow[ix] * doutRow[ox];
                  if (dinRow != nullptr) dinRow[ix] += wv * doutRow[ox];
                }
              }
            }
            dW[w_idx] += gw;
          }
        }
      }
    }
  }
}

void linear_fwd(int in, int out, const double* W, const double* B, const double* x,
                double* y) {
  for (int o = 0; o < out; ++o) {
    double acc = B == nullptr ? 0.0 : B[o];
    const double* row = W + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dx (if non-null) is accumulated into, dW/dB always accumulated.
void linear_bwd(int in, int out, const double* W, const double* x, const double* dy,
                double* dx, double* dW, double* dB) {
  for (int o = 0; o < out; ++o) {
    const double g = dy[o];
    if (dB != nullptr) dB[o] += g;
    const double* row = W + static_cast<std::size_t>(o) * in;
    double* drow = dW + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      drow[i] += g * x[i];
      if (dx != nullptr) dx[i] += g * row[i];
    }
  }
}

// Parameter-free group normalization; statistics per (frame, group).
void gn_fwd(const double* x, int frames, int c, int h, int w, int groups, double* y,
            double* inv) {
  const int gc = c / groups;
  const std::size_t group_n = static_cast<std::size_t>(gc) * h * w;
  const std::size_t frame_n = static_cast<std::size_t>(c) * h * w;
  for (int f = 0; f < frames; ++f) {
    for (int g = 0; g < groups; ++g) {
      const double* xs = x + f * frame_n + static_cast<std::size_t>(g) * group_n;
      double* ys = y + f * frame_n + static_cast<std::size_t>(g) * group_n;
      double mean = 0.0;
      for (std::size_t i = 0; i < group_n; ++i) mean += xs[i];
      mean /= static_cast<double>(group_n);
      double var = 0.0;
      for (std::size_t i = 0; i < group_n; ++i) {
        const double d = xs[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(group_n);
      const double r = 1.0 / std::sqrt(var + kGnEps);
      inv[f * groups + g] = r;
      for (std::size_t i = 0; i < group_n; ++i) ys[i] = (xs[i] - mean) * r;
    }
  }
}

void gn_bwd(const double* y, const double* inv, int frames, int c, int h, int w,
            int groups, const double* dy, double* dx) {
  const int gc = c / groups;
  const std::size_t group_n = static_cast<std::size_t>(gc) * h * w;
  const std::size_t frame_n = static_cast<std::size_t>(c) * h * w;
  for (int f = 0; f < frames; ++f) {
    for (int g = 0; g < groups; ++g) {
      const double* ys = y + f * frame_n + static_cast<std::size_t>(g) * group_n;
      const double* dys = dy + f * frame_n + static_cast<std::size_t>(g) * group_n;
      double* dxs = dx + f * frame_n + static_cast<std::size_t>(g) * group_n;
      double mean_dy = 0.0, mean_dyy = 0.0;
      for (std::size_t i = 0; i < group_n; ++i) {
        mean_dy += dys[i];
        mean_dyy += dys[i] * ys[i];
      }
      mean_dy /= static_cast<double>(group_n);
      mean_dyy /= static_cast<double>(group_n);
      const double r = inv[f * groups + g];
      for (std::size_t i = 0; i < group_n; ++i) {
        dxs[i] = r * (dys[i] - mean_dy - ys[i] * mean_dyy);
      }
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void silu_fwd(const double* x, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * sigmoid(x[i]);
}

void silu_bwd(const double* x, const double* dy, std::size_t n, double* dx) {
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigmoid(x[i]);
    dx[i] = dy[i] * s * (1.0 + x[i] * (1.0 - s));
  }
}

void upsample2_fwd(const double* x, int frames, int c, int h, int w, double* y) {
  const int ho = 2 * h, wo = 2 * w;
  for (int fc = 0; fc < frames * c; ++fc) {
    const double* xp = x + static_cast<std::size_t>(fc) * h * w;
    double* yp = y + static_cast<std::size_t>(fc) * ho * wo;
    for (int oy = 0; oy < ho; ++oy) {
      const double* row = xp + static_cast<std::size_t>(oy / 2) * w;
      double* orow = yp + static_cast<std::size_t>(oy) * wo;
      for (int ox = 0; ox < wo; ++ox) orow[ox] = row[ox / 2];
    }
  }
}

void upsample2_bwd(const double* dy, int frames, int c, int h, int w, double* dx) {
  const int ho = 2 * h, wo = 2 * w;
  for (int fc = 0; fc < frames * c; ++fc) {
    const double* dyp = dy + static_cast<std::size_t>(fc) * ho * wo;
    double* dxp = dx + static_cast<std::size_t>(fc) * h * w;
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) dxp[i] = 0.0;
    for (int oy = 0; oy < ho; ++oy) {
      const double* drow = dyp + static_cast<std::size_t>(oy) * wo;
      double* xrow = dxp + static_cast<std::size_t>(oy / 2) * w;
      for (int ox = 0; ox < wo; ++ox) xrow[ox / 2] += drow[ox];
    }
  }
}

}  // namespace

int groupnorm_groups(int channels) {
  const int want = (channels + 7) / 8;
  for (int g = want; g <= channels; ++g) {
    if (channels % g == 0) return g;
  }
  return channels;
}

void NetConfig::validate() const {
  require(window >= 1 && window % 2 == 1, ErrorKind::InvalidArgument,
          "window must be odd and positive");
  require(base_channels >= 2, ErrorKind::InvalidArgument, "base_channels must be >= 2");
  require(n_levels >= 2, ErrorKind::InvalidArgument, "n_levels must be >= 2");
  require(attn_heads >= 1, ErrorKind::InvalidArgument, "attn_heads must be >= 1");
  require(channels_at(n_levels) % attn_heads == 0, ErrorKind::InvalidArgument,
          "bottleneck channels must be divisible by attn_heads");
  require(sigma_data > 0.0, ErrorKind::InvalidArgument, "sigma_data must be > 0");
}

void NetConfig::validate_grid(int height, int width) const {
  const int div = 1 << n_levels;
  require(height % div == 0 && width % div == 0, ErrorKind::ShapeError,
          "grid dims must be divisible by 2^n_levels");
  require(height >= div && width >= div, ErrorKind::ShapeError, "grid too small");
}

std::size_t NetParams::total_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.count();
  return n;
}

std::vector<double> NetParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_count());
  for (const auto& t : tensors) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

void NetParams::unflatten(const std::vector<double>& flat) {
  require(flat.size() == total_count(), ErrorKind::ShapeError, "unflatten: size mismatch");
  std::size_t off = 0;
  for (auto& t : tensors) {
    std::copy(flat.begin() + off, flat.begin() + off + t.count(), t.data.begin());
    off += t.count();
  }
}

ParamTensor& NetParams::find(const std::string& name) {
  for (auto& t : tensors) {
    if (t.name == name) return t;
  }
  raise(ErrorKind::InvalidArgument, "no parameter tensor named " + name);
}

const ParamTensor& NetParams::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  raise(ErrorKind::InvalidArgument, "no parameter tensor named " + name);
}

void NetParams::check_finite() const {
  for (const auto& t : tensors) {
    for (double v : t.data) {
      require(std::isfinite(v), ErrorKind::InvalidArgument,
              "non-finite parameter in " + t.name);
    }
  }
}

void NetParams::fill_zero() {
  for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
}

UNet::Conv UNet::make_conv(const std::string& name, int cin, int cout, int k, int stride,
                           NetParams& layout) {
  Conv c;
  c.cin = cin;
  c.cout = cout;
  c.ksize = k;
  c.stride = stride;
  c.w_idx = static_cast<int>(layout.tensors.size());
  layout.tensors.push_back(
      ParamTensor{name + ".w",
                  {cout, cin, k, k},
                  std::vector<double>(static_cast<std::size_t>(cout) * cin * k * k, 0.0)});
  c.b_idx = static_cast<int>(layout.tensors.size());
  layout.tensors.push_back(ParamTensor{name + ".b", {cout}, std::vector<double>(cout, 0.0)});
  return c;
}

UNet::Linear UNet::make_linear(const std::string& name, int in, int out, bool bias,
                               NetParams& layout) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w_idx = static_cast<int>(layout.tensors.size());
  layout.tensors.push_back(ParamTensor{
      name + ".w", {out, in}, std::vector<double>(static_cast<std::size_t>(out) * in, 0.0)});
  if (bias) {
    l.b_idx = static_cast<int>(layout.tensors.size());
    layout.tensors.push_back(ParamTensor{name + ".b", {out}, std::vector<double>(out, 0.0)});
  }
  return l;
}

UNet::ResBlock UNet::make_resblock(const std::string& name, int cin, int cout,
                                   NetParams& layout) {
  ResBlock rb;
  rb.cin = cin;
  rb.cout = cout;
  rb.conv1 = make_conv(name + ".conv1", cin, cout, 3, 1, layout);
  rb.emb = make_linear(name + ".emb", cfg_.emb_dim(), cout, true, layout);
  rb.conv2 = make_conv(name + ".conv2", cout, cout, 3, 1, layout);
  if (cin != cout) rb.skip = make_conv(name + ".skip", cin, cout, 1, 1, layout);
  rb.ws_gn1 = new_slot();
  rb.ws_inv1 = new_slot();
  rb.ws_conv1_in = new_slot();
  rb.ws_gn2 = new_slot();
  rb.ws_inv2 = new_slot();
  rb.ws_conv2_in = new_slot();
  rb.ws_x = new_slot();
  return rb;
}

UNet::UNet(const NetConfig& cfg, int height, int width)
    : cfg_(cfg), height_(height), width_(width) {
  cfg_.validate();
  cfg_.validate_grid(height, width);

  NetParams layout;
  emb_fc1_ = make_linear("emb.fc1", 1, cfg_.emb_dim(), true, layout);
  emb_fc2_ = make_linear("emb.fc2", cfg_.emb_dim(), cfg_.emb_dim(), true, layout);
  ws_emb_fc1_in_ = new_slot();
  ws_emb_fc1_out_ = new_slot();
  ws_emb_fc2_in_ = new_slot();
  ws_emb_fc2_out_ = new_slot();
  ws_emb_vec_ = new_slot();

  stem_ = make_conv("stem", 2, cfg_.base_channels, 3, 1, layout);
  ws_stem_in_ = new_slot();

  for (int l = 0; l < cfg_.n_levels; ++l) {
    enc_.push_back(make_resblock("enc" + std::to_string(l), cfg_.channels_at(l),
                                 cfg_.channels_at(l), layout));
    down_.push_back(make_conv("down" + std::to_string(l), cfg_.channels_at(l),
                              cfg_.channels_at(l + 1), 3, 2, layout));
    ws_down_in_.push_back(new_slot());
  }

  const int cb = cfg_.channels_at(cfg_.n_levels);
  mid1_ = make_resblock("mid1", cb, cb, layout);
  attn_.channels = cb;
  attn_.heads = cfg_.attn_heads;
  attn_.wq = make_linear("attn.wq", cb, cb, false, layout);
  attn_.wk = make_linear("attn.wk", cb, cb, false, layout);
  attn_.wv = make_linear("attn.wv", cb, cb, false, layout);
  attn_.wo = make_linear("attn.wo", cb, cb, false, layout);
  attn_.ws_gn = new_slot();
  attn_.ws_inv = new_slot();
  attn_.ws_x = new_slot();
  attn_.ws_q = new_slot();
  attn_.ws_k = new_slot();
  attn_.ws_v = new_slot();
  attn_.ws_p = new_slot();
  attn_.ws_o = new_slot();
  mid2_ = make_resblock("mid2", cb, cb, layout);

  for (int l = cfg_.n_levels - 1; l >= 0; --l) {
    up_.push_back(make_conv("up" + std::to_string(l), cfg_.channels_at(l + 1),
                            cfg_.channels_at(l), 3, 1, layout));
    ws_up_in_.push_back(new_slot());
    dec_.push_back(make_resblock("dec" + std::to_string(l), 2 * cfg_.channels_at(l),
                                 cfg_.channels_at(l), layout));
  }

  out_conv_ = make_conv("out", cfg_.base_channels, 1, 3, 1, layout);
  ws_out_gn_ = new_slot();
  ws_out_inv_ = new_slot();
  ws_out_conv_in_ = new_slot();

  layout_ = std::move(layout);
}

NetParams make_param_layout(const NetConfig& cfg) {
  cfg.validate();
  const int div = 1 << cfg.n_levels;
  UNet net(cfg, 4 * div, 4 * div);
  return net.layout();
}

NetParams init_params(const NetConfig& cfg, uint64_t seed) {
  NetParams params = make_param_layout(cfg);
  Rng rng(seed);
  for (auto& t : params.tensors) {
    const bool is_bias = t.shape.size() == 1;
    const bool is_final = t.name == "out.w" || t.name == "out.b";
    if (is_bias || is_final) continue;  // stays zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) {
      fan_in *= static_cast<std::size_t>(t.shape[d]);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
  }
  return params;
}

std::vector<double> UNet::resblock_forward(const ResBlock& rb, const NetParams& p,
                                           const std::vector<double>& x,
                                           const std::vector<double>& emb, int frames,
                                           int h, int w, NetWorkspace& ws) const {
  const int groups1 = groupnorm_groups(rb.cin);
  const int groups2 = groupnorm_groups(rb.cout);
  const std::size_t n_in = static_cast<std::size_t>(frames) * rb.cin * h * w;
  const std::size_t n_out = static_cast<std::size_t>(frames) * rb.cout * h * w;

  ws.slots[rb.ws_x] = x;
  auto& gn1 = ws.slots[rb.ws_gn1];
  gn1.resize(n_in);
  auto& inv1 = ws.slots[rb.ws_inv1];
  inv1.resize(static_cast<std::size_t>(frames) * groups1);
  gn_fwd(x.data(), frames, rb.cin, h, w, groups1, gn1.data(), inv1.data());

  auto& conv1_in = ws.slots[rb.ws_conv1_in];
  conv1_in.resize(n_in);
  silu_fwd(gn1.data(), n_in, conv1_in.data());

  std::vector<double> h1(n_out);
  conv_fwd(conv_dims(frames, rb.cin, h, w, rb.cout, 3, 1), conv1_in.data(),
           p.tensors[rb.conv1.w_idx].data.data(), p.tensors[rb.conv1.b_idx].data.data(),
           h1.data());

  std::vector<double> proj(rb.cout);
  linear_fwd(rb.emb.in, rb.emb.out, p.tensors[rb.emb.w_idx].data.data(),
             p.tensors[rb.emb.b_idx].data.data(), emb.data(), proj.data());
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < rb.cout; ++c) {
      double* plane = h1.data() + (static_cast<std::size_t>(f) * rb.cout + c) * h * w;
      const double b = proj[c];
      for (int i = 0; i < h * w; ++i) plane[i] += b;
    }
  }

  auto& gn2 = ws.slots[rb.ws_gn2];
  gn2.resize(n_out);
  auto& inv2 = ws.slots[rb.ws_inv2];
  inv2.resize(static_cast<std::size_t>(frames) * groups2);
  gn_fwd(h1.data(), frames, rb.cout, h, w, groups2, gn2.data(), inv2.data());

  auto& conv2_in = ws.slots[rb.ws_conv2_in];
  conv2_in.resize(n_out);
  silu_fwd(gn2.data(), n_out, conv2_in.data());

  std::vector<double> out(n_out);
  conv_fwd(conv_dims(frames, rb.cout, h, w, rb.cout, 3, 1), conv2_in.data(),
           p.tensors[rb.conv2.w_idx].data.data(), p.tensors[rb.conv2.b_idx].data.data(),
           out.data());

  if (rb.skip.has_value()) {
    std::vector<double> s(n_out);
    conv_fwd(conv_dims(frames, rb.cin, h, w, rb.cout, 1, 1), x.data(),
             p.tensors[rb.skip->w_idx].data.data(), p.tensors[rb.skip->b_idx].data.data(),
             s.data());
    for (std::size_t i = 0; i < n_out; ++i) out[i] += s[i];
  } else {
    for (std::size_t i = 0; i < n_out; ++i) out[i] += x[i];
  }
  return out;
}

std::vector<double> UNet::resblock_backward(const ResBlock& rb, const NetParams& p,
                                            const NetWorkspace& ws,
                                            const std::vector<double>& dy,
                                            std::vector<double>& d_emb, int frames, int h,
                                            int w, NetParams& grads) const {
  const int groups1 = groupnorm_groups(rb.cin);
  const int groups2 = groupnorm_groups(rb.cout);
  const std::size_t n_in = static_cast<std::size_t>(frames) * rb.cin * h * w;
  const std::size_t n_out = static_cast<std::size_t>(frames) * rb.cout * h * w;

  std::vector<double> dx(n_in, 0.0);
  if (rb.skip.has_value()) {
    conv_bwd(conv_dims(frames, rb.cin, h, w, rb.cout, 1, 1), ws.slots[rb.ws_x].data(),
             p.tensors[rb.skip->w_idx].data.data(), dy.data(), dx.data(),
             grads.tensors[rb.skip->w_idx].data.data(),
             grads.tensors[rb.skip->b_idx].data.data());
  } else {
    dx = dy;
  }

  std::vector<double> d_conv2_in(n_out, 0.0);
  conv_bwd(conv_dims(frames, rb.cout, h, w, rb.cout, 3, 1), ws.slots[rb.ws_conv2_in].data(),
           p.tensors[rb.conv2.w_idx].data.data(), dy.data(), d_conv2_in.data(),
           grads.tensors[rb.conv2.w_idx].data.data(),
           grads.tensors[rb.conv2.b_idx].data.data());

  std::vector<double> d_gn2(n_out);
  silu_bwd(ws.slots[rb.ws_gn2].data(), d_conv2_in.data(), n_out, d_gn2.data());

  std::vector<double> d_h1(n_out);
  gn_bwd(ws.slots[rb.ws_gn2].data(), ws.slots[rb.ws_inv2].data(), frames, rb.cout, h, w,
         groups2, d_gn2.data(), d_h1.data());

  std::vector<double> d_proj(rb.cout, 0.0);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < rb.cout; ++c) {
      const double* plane = d_h1.data() + (static_cast<std::size_t>(f) * rb.cout + c) * h * w;
      double acc = 0.0;
      for (int i = 0; i < h * w; ++i) acc += plane[i];
      d_proj[c] += acc;
    }
  }
  linear_bwd(rb.emb.in, rb.emb.out, p.tensors[rb.emb.w_idx].data.data(),
             ws.slots[ws_emb_vec_].data(), d_proj.data(), d_emb.data(),
             grads.tensors[rb.emb.w_idx].data.data(),
             grads.tensors[rb.emb.b_idx].data.data());

  std::vector<double> d_conv1_in(n_in, 0.0);
  conv_bwd(conv_dims(frames, rb.cin, h, w, rb.cout, 3, 1), ws.slots[rb.ws_conv1_in].data(),
           p.tensors[rb.conv1.w_idx].data.data(), d_h1.data(), d_conv1_in.data(),
           grads.tensors[rb.conv1.w_idx].data.data(),
           grads.tensors[rb.conv1.b_idx].data.data());

  std::vector<double> d_gn1(n_in);
  silu_bwd(ws.slots[rb.ws_gn1].data(), d_conv1_in.data(), n_in, d_gn1.data());

  std::vector<double> d_x_main(n_in);
  gn_bwd(ws.slots[rb.ws_gn1].data(), ws.slots[rb.ws_inv1].data(), frames, rb.cin, h, w,
         groups1, d_gn1.data(), d_x_main.data());

  for (std::size_t i = 0; i < n_in; ++i) dx[i] += d_x_main[i];
  return dx;
}

std::vector<double> UNet::attention_forward(const Attention& at, const NetParams& p,
                                            const std::vector<double>& x, int frames,
                                            int h, int w, NetWorkspace& ws) const {
  const int C = at.channels;
  const int N = frames * h * w;
  const int groups = groupnorm_groups(C);
  const std::size_t n_total = static_cast<std::size_t>(N) * C;

  auto& gn = ws.slots[at.ws_gn];
  gn.resize(n_total);
  auto& inv = ws.slots[at.ws_inv];
  inv.resize(static_cast<std::size_t>(frames) * groups);
  gn_fwd(x.data(), frames, C, h, w, groups, gn.data(), inv.data());

  // tokens: token n = (t*h + y)*w + x_, feature c
  auto& X = ws.slots[at.ws_x];
  X.assign(n_total, 0.0);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < C; ++c) {
      const double* plane = gn.data() + (static_cast<std::size_t>(f) * C + c) * h * w;
      for (int i = 0; i < h * w; ++i) {
        X[(static_cast<std::size_t>(f) * h * w + i) * C + c] = plane[i];
      }
    }
  }

  auto matmul_tokens = [&](const double* W, std::vector<double>& out) {
    out.assign(n_total, 0.0);
    for (int n = 0; n < N; ++n) {
      const double* xn = X.data() + static_cast<std::size_t>(n) * C;
      double* on = out.data() + static_cast<std::size_t>(n) * C;
      for (int c = 0; c < C; ++c) {
        const double xv = xn[c];
        if (xv == 0.0) continue;
        const double* wrow = W + static_cast<std::size_t>(c) * C;
        for (int co = 0; co < C; ++co) on[co] += xv * wrow[co];
      }
    }
  };

  auto& Q = ws.slots[at.ws_q];
  auto& K = ws.slots[at.ws_k];
  auto& V = ws.slots[at.ws_v];
  matmul_tokens(p.tensors[at.wq.w_idx].data.data(), Q);
  matmul_tokens(p.tensors[at.wk.w_idx].data.data(), K);
  matmul_tokens(p.tensors[at.wv.w_idx].data.data(), V);

  const int d = C / at.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  auto& P = ws.slots[at.ws_p];
  P.assign(static_cast<std::size_t>(at.heads) * N * N, 0.0);
  auto& O = ws.slots[at.ws_o];
  O.assign(n_total, 0.0);

  std::vector<double> row(N);
  for (int hh = 0; hh < at.heads; ++hh) {
    const int off = hh * d;
    double* Ph = P.data() + static_cast<std::size_t>(hh) * N * N;
    for (int n = 0; n < N; ++n) {
      const double* qn = Q.data() + static_cast<std::size_t>(n) * C + off;
      double maxv = -1e300;
      for (int m = 0; m < N; ++m) {
        const double* km = K.data() + static_cast<std::size_t>(m) * C + off;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += qn[j] * km[j];
        row[m] = s * scale;
        maxv = std::max(maxv, row[m]);
      }
      double denom = 0.0;
      for (int m = 0; m < N; ++m) {
        row[m] = std::exp(row[m] - maxv);
        denom += row[m];
      }
      double* prow = Ph + static_cast<std::size_t>(n) * N;
      double* on = O.data() + static_cast<std::size_t>(n) * C + off;
      for (int m = 0; m < N; ++m) prow[m] = row[m] / denom;
      for (int m = 0; m < N; ++m) {
        const double pv = prow[m];
        const double* vm = V.data() + static_cast<std::size_t>(m) * C + off;
        for (int j = 0; j < d; ++j) on[j] += pv * vm[j];
      }
    }
  }

  // Y = O * Wo, scattered back onto the residual stream
  std::vector<double> out(x);
  const double* Wo = p.tensors[at.wo.w_idx].data.data();
  for (int n = 0; n < N; ++n) {
    const int f = n / (h * w);
    const int i = n % (h * w);
    const double* on = O.data() + static_cast<std::size_t>(n) * C;
    for (int c = 0; c < C; ++c) {
      const double ov = on[c];
      if (ov == 0.0) continue;
      const double* wrow = Wo + static_cast<std::size_t>(c) * C;
      for (int co = 0; co < C; ++co) {
        out[(static_cast<std::size_t>(f) * C + co) * h * w + i] += ov * wrow[co];
      }
    }
  }
  return out;
}

std::vector<double> UNet::attention_backward(const Attention& at, const NetParams& p,
                                             const NetWorkspace& ws,
                                             const std::vector<double>& dy, int frames,
                                             int h, int w, NetParams& grads) const {
  const int C = at.channels;
  const int N = frames * h * w;
  const int groups = groupnorm_groups(C);
  const std::size_t n_total = static_cast<std::size_t>(N) * C;

  const auto& X = ws.slots[at.ws_x];
  const auto& Q = ws.slots[at.ws_q];
  const auto& K = ws.slots[at.ws_k];
  const auto& V = ws.slots[at.ws_v];
  const auto& P = ws.slots[at.ws_p];
  const auto& O = ws.slots[at.ws_o];

  // dY in token layout
  std::vector<double> dY(n_total);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < C; ++c) {
      const double* plane = dy.data() + (static_cast<std::size_t>(f) * C + c) * h * w;
      for (int i = 0; i < h * w; ++i) {
        dY[(static_cast<std::size_t>(f) * h * w + i) * C + c] = plane[i];
      }
    }
  }

  // dWo += O^T dY ; dO = dY Wo^T
  double* dWo = grads.tensors[at.wo.w_idx].data.data();
  const double* Wo = p.tensors[at.wo.w_idx].data.data();
  std::vector<double> dO(n_total, 0.0);
  for (int n = 0; n < N; ++n) {
    const double* on = O.data() + static_cast<std::size_t>(n) * C;
    const double* dyn = dY.data() + static_cast<std::size_t>(n) * C;
    double* don = dO.data() + static_cast<std::size_t>(n) * C;
    for (int c = 0; c < C; ++c) {
      const double* wrow = Wo + static_cast<std::size_t>(c) * C;
      double* dwrow = dWo + static_cast<std::size_t>(c) * C;
      const double ov = on[c];
      double acc = 0.0;
      for (int co = 0; co < C; ++co) {
        dwrow[co] += ov * dyn[co];
        acc += dyn[co] * wrow[co];
      }
      don[c] = acc;
    }
  }

  const int d = C / at.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> dQ(n_total, 0.0), dK(n_total, 0.0), dV(n_total, 0.0);
  std::vector<double> dP(N), dS(N);
  for (int hh = 0; hh < at.heads; ++hh) {
    const int off = hh * d;
    const double* Ph = P.data() + static_cast<std::size_t>(hh) * N * N;
    for (int n = 0; n < N; ++n) {
      const double* prow = Ph + static_cast<std::size_t>(n) * N;
      const double* don = dO.data() + static_cast<std::size_t>(n) * C + off;
      // dP row and dV accumulation
      double dot = 0.0;
      for (int m = 0; m < N; ++m) {
        const double* vm = V.data() + static_cast<std::size_t>(m) * C + off;
        double acc = 0.0;
        for (int j = 0; j < d; ++j) acc += don[j] * vm[j];
        dP[m] = acc;
        dot += prow[m] * acc;
      }
      for (int m = 0; m < N; ++m) dS[m] = prow[m] * (dP[m] - dot);
      double* dqn = dQ.data() + static_cast<std::size_t>(n) * C + off;
      const double* qn = Q.data() + static_cast<std::size_t>(n) * C + off;
      for (int m = 0; m < N; ++m) {
        const double dsm = dS[m] * scale;
        const double pv = prow[m];
        const double* km = K.data() + static_cast<std::size_t>(m) * C + off;
        double* dkm = dK.data() + static_cast<std::size_t>(m) * C + off;
        double* dvm = dV.data() + static_cast<std::size_t>(m) * C + off;
        for (int j = 0; j < d; ++j) {
          dqn[j] += dsm * km[j];
          dkm[j] += dsm * qn[j];
          dvm[j] += pv * don[j];
        }
      }
    }
  }

  // dX = dQ Wq^T + dK Wk^T + dV Wv^T ; dW* += X^T d*
  std::vector<double> dX(n_total, 0.0);
  auto back_proj = [&](const std::vector<double>& dOut, int w_idx) {
    const double* W = p.tensors[w_idx].data.data();
    double* dW = grads.tensors[w_idx].data.data();
    for (int n = 0; n < N; ++n) {
      const double* xn = X.data() + static_cast<std::size_t>(n) * C;
      const double* dn = dOut.data() + static_cast<std::size_t>(n) * C;
      double* dxn = dX.data() + static_cast<std::size_t>(n) * C;
      for (int c = 0; c < C; ++c) {
        const double* wrow = W + static_cast<std::size_t>(c) * C;
        double* dwrow = dW + static_cast<std::size_t>(c) * C;
        const double xv = xn[c];
        double acc = 0.0;
        for (int co = 0; co < C; ++co) {
          dwrow[co] += xv * dn[co];
          acc += dn[co] * wrow[co];
        }
        dxn[c] += acc;
      }
    }
  };
  back_proj(dQ, attn_.wq.w_idx);
  back_proj(dK, attn_.wk.w_idx);
  back_proj(dV, attn_.wv.w_idx);

  // scatter dX back to tensor layout, then group-norm backward
  std::vector<double> d_gnout(n_total);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < C; ++c) {
      double* plane = d_gnout.data() + (static_cast<std::size_t>(f) * C + c) * h * w;
      for (int i = 0; i < h * w; ++i) {
        plane[i] = dX[(static_cast<std::size_t>(f) * h * w + i) * C + c];
      }
    }
  }
  std::vector<double> dx(dy);  // residual branch
  std::vector<double> d_gn_in(n_total);
  gn_bwd(ws.slots[at.ws_gn].data(), ws.slots[at.ws_inv].data(), frames, C, h, w, groups,
         d_gnout.data(), d_gn_in.data());
  for (std::size_t i = 0; i < n_total; ++i) dx[i] += d_gn_in[i];
  return dx;
}

std::vector<double> UNet::forward(const NetParams& params, const std::vector<double>& input,
                                  double c_noise, NetWorkspace& ws) const {
  const int w_frames = cfg_.window;
  const int H = height_, W = width_;
  require(input.size() == static_cast<std::size_t>(w_frames) * 2 * H * W,
          ErrorKind::ShapeError, "unet input must be (w, 2, H, W)");
  require(params.total_count() == layout_.total_count(), ErrorKind::ShapeError,
          "params do not match layout");
  ws.slots.assign(static_cast<std::size_t>(n_slots_), {});

  // noise embedding
  ws.slots[ws_emb_fc1_in_] = {c_noise};
  auto& a1 = ws.slots[ws_emb_fc1_out_];
  a1.resize(cfg_.emb_dim());
  linear_fwd(1, cfg_.emb_dim(), params.tensors[emb_fc1_.w_idx].data.data(),
             params.tensors[emb_fc1_.b_idx].data.data(), ws.slots[ws_emb_fc1_in_].data(),
             a1.data());
  auto& h1 = ws.slots[ws_emb_fc2_in_];
  h1.resize(cfg_.emb_dim());
  silu_fwd(a1.data(), a1.size(), h1.data());
  auto& a2 = ws.slots[ws_emb_fc2_out_];
  a2.resize(cfg_.emb_dim());
  linear_fwd(cfg_.emb_dim(), cfg_.emb_dim(), params.tensors[emb_fc2_.w_idx].data.data(),
             params.tensors[emb_fc2_.b_idx].data.data(), h1.data(), a2.data());
  auto& emb = ws.slots[ws_emb_vec_];
  emb.resize(cfg_.emb_dim());
  silu_fwd(a2.data(), a2.size(), emb.data());

  // stem
  ws.slots[ws_stem_in_] = input;
  std::vector<double> h(static_cast<std::size_t>(w_frames) * cfg_.base_channels * H * W);
  conv_fwd(conv_dims(w_frames, 2, H, W, cfg_.base_channels, 3, 1), input.data(),
           params.tensors[stem_.w_idx].data.data(), params.tensors[stem_.b_idx].data.data(),
           h.data());

  // encoder
  for (int l = 0; l < cfg_.n_levels; ++l) {
    const int hl = H >> l, wl = W >> l;
    h = resblock_forward(enc_[l], params, h, emb, w_frames, hl, wl, ws);
    ws.slots[ws_down_in_[l]] = h;
    std::vector<double> down(static_cast<std::size_t>(w_frames) * cfg_.channels_at(l + 1) *
                             (hl / 2) * (wl / 2));
    conv_fwd(conv_dims(w_frames, cfg_.channels_at(l), hl, wl, cfg_.channels_at(l + 1), 3, 2),
             h.data(), params.tensors[down_[l].w_idx].data.data(),
             params.tensors[down_[l].b_idx].data.data(), down.data());
    h = std::move(down);
  }

  // bottleneck
  const int hb = H >> cfg_.n_levels, wb = W >> cfg_.n_levels;
  h = resblock_forward(mid1_, params, h, emb, w_frames, hb, wb, ws);
  h = attention_forward(attn_, params, h, w_frames, hb, wb, ws);
  h = resblock_forward(mid2_, params, h, emb, w_frames, hb, wb, ws);

  // decoder
  for (int i = 0; i < cfg_.n_levels; ++i) {
    const int l = cfg_.n_levels - 1 - i;
    const int hl = H >> l, wl = W >> l;
    const int cl = cfg_.channels_at(l), clp = cfg_.channels_at(l + 1);
    std::vector<double> upsampled(static_cast<std::size_t>(w_frames) * clp * hl * wl);
    upsample2_fwd(h.data(), w_frames, clp, hl / 2, wl / 2, upsampled.data());
    ws.slots[ws_up_in_[i]] = upsampled;
    std::vector<double> up_out(static_cast<std::size_t>(w_frames) * cl * hl * wl);
    conv_fwd(conv_dims(w_frames, clp, hl, wl, cl, 3, 1), upsampled.data(),
             params.tensors[up_[i].w_idx].data.data(),
             params.tensors[up_[i].b_idx].data.data(), up_out.data());

    const auto& skip = ws.slots[ws_down_in_[l]];
    std::vector<double> cat(static_cast<std::size_t>(w_frames) * 2 * cl * hl * wl);
    const std::size_t plane = static_cast<std::size_t>(cl) * hl * wl;
    for (int f = 0; f < w_frames; ++f) {
      std::copy(up_out.begin() + f * plane, up_out.begin() + (f + 1) * plane,
                cat.begin() + static_cast<std::size_t>(f) * 2 * plane);
      std::copy(skip.begin() + f * plane, skip.begin() + (f + 1) * plane,
                cat.begin() + static_cast<std::size_t>(f) * 2 * plane + plane);
    }
    h = resblock_forward(dec_[i], params, cat, emb, w_frames, hl, wl, ws);
  }

  // output head
  const std::size_t n0 = static_cast<std::size_t>(w_frames) * cfg_.base_channels * H * W;
  const int groups0 = groupnorm_groups(cfg_.base_channels);
  auto& gn_out = ws.slots[ws_out_gn_];
  gn_out.resize(n0);
  auto& inv_out = ws.slots[ws_out_inv_];
  inv_out.resize(static_cast<std::size_t>(w_frames) * groups0);
  gn_fwd(h.data(), w_frames, cfg_.base_channels, H, W, groups0, gn_out.data(),
         inv_out.data());
  auto& conv_in = ws.slots[ws_out_conv_in_];
  conv_in.resize(n0);
  silu_fwd(gn_out.data(), n0, conv_in.data());

  std::vector<double> out(static_cast<std::size_t>(w_frames) * H * W);
  conv_fwd(conv_dims(w_frames, cfg_.base_channels, H, W, 1, 3, 1), conv_in.data(),
           params.tensors[out_conv_.w_idx].data.data(),
           params.tensors[out_conv_.b_idx].data.data(), out.data());
  return out;
}

void UNet::backward(const NetParams& params, const NetWorkspace& ws,
                    const std::vector<double>& d_out, NetParams& grads) const {
  const int w_frames = cfg_.window;
  const int H = height_, W = width_;
  require(d_out.size() == static_cast<std::size_t>(w_frames) * H * W, ErrorKind::ShapeError,
          "unet d_out must be (w, H, W)");
  require(grads.total_count() == layout_.total_count(), ErrorKind::ShapeError,
          "grads do not match layout");

  std::vector<double> d_emb(cfg_.emb_dim(), 0.0);

  // output head backward
  const std::size_t n0 = static_cast<std::size_t>(w_frames) * cfg_.base_channels * H * W;
  const int groups0 = groupnorm_groups(cfg_.base_channels);
  std::vector<double> d_conv_in(n0, 0.0);
  conv_bwd(conv_dims(w_frames, cfg_.base_channels, H, W, 1, 3, 1),
           ws.slots[ws_out_conv_in_].data(), params.tensors[out_conv_.w_idx].data.data(),
           d_out.data(), d_conv_in.data(), grads.tensors[out_conv_.w_idx].data.data(),
           grads.tensors[out_conv_.b_idx].data.data());
  std::vector<double> d_gn(n0);
  silu_bwd(ws.slots[ws_out_gn_].data(), d_conv_in.data(), n0, d_gn.data());
  std::vector<double> dh(n0);
  gn_bwd(ws.slots[ws_out_gn_].data(), ws.slots[ws_out_inv_].data(), w_frames,
         cfg_.base_channels, H, W, groups0, d_gn.data(), dh.data());

  // decoder backward (reverse of forward decoder order)
  std::vector<std::vector<double>> d_skip(cfg_.n_levels);
  for (int i = cfg_.n_levels - 1; i >= 0; --i) {
    const int l = cfg_.n_levels - 1 - i;
    const int hl = H >> l, wl = W >> l;
    const int cl = cfg_.channels_at(l), clp = cfg_.channels_at(l + 1);
    std::vector<double> d_cat =
        resblock_backward(dec_[i], params, ws, dh, d_emb, w_frames, hl, wl, grads);

    const std::size_t plane = static_cast<std::size_t>(cl) * hl * wl;
    std::vector<double> d_up_out(static_cast<std::size_t>(w_frames) * plane);
    d_skip[l].resize(static_cast<std::size_t>(w_frames) * plane);
    for (int f = 0; f < w_frames; ++f) {
      std::copy(d_cat.begin() + static_cast<std::size_t>(f) * 2 * plane,
                d_cat.begin() + static_cast<std::size_t>(f) * 2 * plane + plane,
                d_up_out.begin() + f * plane);
      std::copy(d_cat.begin() + static_cast<std::size_t>(f) * 2 * plane + plane,
                d_cat.begin() + static_cast<std::size_t>(f + 1) * 2 * plane,
                d_skip[l].begin() + f * plane);
    }

    std::vector<double> d_upsampled(static_cast<std::size_t>(w_frames) * clp * hl * wl, 0.0);
    conv_bwd(conv_dims(w_frames, clp, hl, wl, cl, 3, 1), ws.slots[ws_up_in_[i]].data(),
             params.tensors[up_[i].w_idx].data.data(), d_up_out.data(), d_upsampled.data(),
             grads.tensors[up_[i].w_idx].data.data(),
             grads.tensors[up_[i].b_idx].data.data());
    dh.assign(static_cast<std::size_t>(w_frames) * clp * (hl / 2) * (wl / 2), 0.0);
    upsample2_bwd(d_upsampled.data(), w_frames, clp, hl / 2, wl / 2, dh.data());
  }

  // bottleneck backward
  const int hb = H >> cfg_.n_levels, wb = W >> cfg_.n_levels;
  dh = resblock_backward(mid2_, params, ws, dh, d_emb, w_frames, hb, wb, grads);
  dh = attention_backward(attn_, params, ws, dh, w_frames, hb, wb, grads);
  dh = resblock_backward(mid1_, params, ws, dh, d_emb, w_frames, hb, wb, grads);

  // encoder backward
  for (int l = cfg_.n_levels - 1; l >= 0; --l) {
    const int hl = H >> l, wl = W >> l;
    const int cl = cfg_.channels_at(l), clp = cfg_.channels_at(l + 1);
    std::vector<double> d_down_in(static_cast<std::size_t>(w_frames) * cl * hl * wl, 0.0);
    conv_bwd(conv_dims(w_frames, cl, hl, wl, clp, 3, 2), ws.slots[ws_down_in_[l]].data(),
             params.tensors[down_[l].w_idx].data.data(), dh.data(), d_down_in.data(),
             grads.tensors[down_[l].w_idx].data.data(),
             grads.tensors[down_[l].b_idx].data.data());
    for (std::size_t i = 0; i < d_down_in.size(); ++i) d_down_in[i] += d_skip[l][i];
    dh = resblock_backward(enc_[l], params, ws, d_down_in, d_emb, w_frames, hl, wl, grads);
  }

  // stem backward (input gradient not needed)
  conv_bwd(conv_dims(w_frames, 2, H, W, cfg_.base_channels, 3, 1),
           ws.slots[ws_stem_in_].data(), params.tensors[stem_.w_idx].data.data(), dh.data(),
           nullptr, grads.tensors[stem_.w_idx].data.data(),
           grads.tensors[stem_.b_idx].data.data());

  // embedding backward
  std::vector<double> d_a2(cfg_.emb_dim());
  silu_bwd(ws.slots[ws_emb_fc2_out_].data(), d_emb.data(), d_emb.size(), d_a2.data());
  std::vector<double> d_h1(cfg_.emb_dim(), 0.0);
  linear_bwd(cfg_.emb_dim(), cfg_.emb_dim(), params.tensors[emb_fc2_.w_idx].data.data(),
             ws.slots[ws_emb_fc2_in_].data(), d_a2.data(), d_h1.data(),
             grads.tensors[emb_fc2_.w_idx].data.data(),
             grads.tensors[emb_fc2_.b_idx].data.data());
  std::vector<double> d_a1(cfg_.emb_dim());
  silu_bwd(ws.slots[ws_emb_fc1_out_].data(), d_h1.data(), d_h1.size(), d_a1.data());
  linear_bwd(1, cfg_.emb_dim(), params.tensors[emb_fc1_.w_idx].data.data(),
             ws.slots[ws_emb_fc1_in_].data(), d_a1.data(), nullptr,
             grads.tensors[emb_fc1_.w_idx].data.data(),
             grads.tensors[emb_fc1_.b_idx].data.data());
}

}  // namespace recon
