#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recon/errors.hpp"

namespace recon {

// Encoder-decoder denoiser backbone. Frames of the w-long window are
// processed as a batch by shared 2D convolutions (the stem maps each frame's
// data+mask channel pair independently, i.e. a w-group convolution over the
// 2w input channels); temporal mixing happens in the joint space-time
// self-attention block at the bottleneck, which attends over all
// (w, H/2^L, W/2^L) positions at once.
struct NetConfig {
  int window = 5;          // w = 2k+1, odd
  int base_channels = 16;  // channels at full resolution
  int n_levels = 2;        // encoder downsamplings
  int attn_heads = 2;
  double sigma_data = 0.5;  // data std in normalized space

  int half_window() const { return window / 2; }
  int in_channels() const { return 2 * window; }
  int channels_at(int level) const { return base_channels << level; }
  int emb_dim() const { return 4 * base_channels; }

  void validate() const;
  void validate_grid(int height, int width) const;
};

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;

  std::size_t count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

// Ordered named weight collection; tensor order is the flatten order.
struct NetParams {
  std::vector<ParamTensor> tensors;

  std::size_t total_count() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
  ParamTensor& find(const std::string& name);
  const ParamTensor& find(const std::string& name) const;
  void check_finite() const;
  void fill_zero();
};

// Parameter layout for a config, all values zero.
NetParams make_param_layout(const NetConfig& cfg);

// Deterministic init: weights uniform in +-1/sqrt(fan_in), biases zero,
// final output convolution fully zero.
NetParams init_params(const NetConfig& cfg, uint64_t seed);

// Forward activation cache consumed by backward.
struct NetWorkspace {
  std::vector<std::vector<double>> slots;
};

class UNet {
 public:
  UNet(const NetConfig& cfg, int height, int width);

  // input is (w, 2, H, W): per frame channel 0 = preconditioned data,
  // channel 1 = mask. Returns the raw network output (w, H, W).
  std::vector<double> forward(const NetParams& params, const std::vector<double>& input,
                              double c_noise, NetWorkspace& ws) const;

  // d_out is (w, H, W); accumulates parameter gradients into grads
  // (layout must match make_param_layout).
  void backward(const NetParams& params, const NetWorkspace& ws,
                const std::vector<double>& d_out, NetParams& grads) const;

  const NetConfig& config() const { return cfg_; }
  const NetParams& layout() const { return layout_; }

 private:
  struct Conv {
    int w_idx = -1, b_idx = -1;
    int cin = 0, cout = 0, ksize = 3, stride = 1;
  };
  struct Linear {
    int w_idx = -1, b_idx = -1;  // b_idx < 0 means bias-free
    int in = 0, out = 0;
  };
  struct ResBlock {
    Conv conv1, conv2;
    Linear emb;
    std::optional<Conv> skip;
    int cin = 0, cout = 0;
    int ws_gn1 = -1, ws_inv1 = -1, ws_conv1_in = -1;
    int ws_gn2 = -1, ws_inv2 = -1, ws_conv2_in = -1;
    int ws_x = -1;
  };
  struct Attention {
    Linear wq, wk, wv, wo;  // bias-free, C x C
    int channels = 0, heads = 0;
    int ws_gn = -1, ws_inv = -1, ws_x = -1, ws_q = -1, ws_k = -1, ws_v = -1,
        ws_p = -1, ws_o = -1;
  };

  int new_slot() { return n_slots_++; }

  Conv make_conv(const std::string& name, int cin, int cout, int k, int stride,
                 NetParams& layout);
  Linear make_linear(const std::string& name, int in, int out, bool bias,
                     NetParams& layout);
  ResBlock make_resblock(const std::string& name, int cin, int cout, NetParams& layout);

  std::vector<double> resblock_forward(const ResBlock& rb, const NetParams& p,
                                       const std::vector<double>& x,
                                       const std::vector<double>& emb, int frames, int h,
                                       int w, NetWorkspace& ws) const;
  std::vector<double> resblock_backward(const ResBlock& rb, const NetParams& p,
                                        const NetWorkspace& ws,
                                        const std::vector<double>& dy,
                                        std::vector<double>& d_emb, int frames, int h,
                                        int w, NetParams& grads) const;
  std::vector<double> attention_forward(const Attention& at, const NetParams& p,
                                        const std::vector<double>& x, int frames, int h,
                                        int w, NetWorkspace& ws) const;
  std::vector<double> attention_backward(const Attention& at, const NetParams& p,
                                         const NetWorkspace& ws,
                                         const std::vector<double>& dy, int frames, int h,
                                         int w, NetParams& grads) const;

  NetConfig cfg_;
  int height_ = 0, width_ = 0;
  int n_slots_ = 0;
  NetParams layout_;

  Linear emb_fc1_, emb_fc2_;
  int ws_emb_fc1_in_ = -1, ws_emb_fc1_out_ = -1, ws_emb_fc2_in_ = -1,
      ws_emb_fc2_out_ = -1, ws_emb_vec_ = -1;
  Conv stem_;
  int ws_stem_in_ = -1;
  std::vector<ResBlock> enc_;
  std::vector<Conv> down_;
  std::vector<int> ws_down_in_;
  ResBlock mid1_, mid2_;
  Attention attn_;
  std::vector<Conv> up_;  // stored in use order: level n_levels-1 .. 0
  std::vector<int> ws_up_in_;
  std::vector<ResBlock> dec_;
  Conv out_conv_;
  int ws_out_gn_ = -1, ws_out_inv_ = -1, ws_out_conv_in_ = -1;
};

// Group count for parameter-free group normalization: the smallest divisor
// of `channels` giving groups of at most 8 channels.
int groupnorm_groups(int channels);

}  // namespace recon
