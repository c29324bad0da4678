#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

namespace monosfm::nets {

enum class EncoderFamily { kDeit, kPvt, kResnet };

std::string to_string(EncoderFamily f);
EncoderFamily encoder_family_from_string(const std::string& s);

// Architecture hyperparameters of a depth or pose encoder.
//
//   deit:   single-resolution ViT. dims = {d}, depths = {number of blocks},
//           heads = {h}, taps = 1-based block indices fed to the decoder.
//   pvt:    four-stage pyramid transformer with overlapping patch embedding.
//           dims/depths/heads/mlp_ratios/sr_ratios are per stage; every stage is tapped.
//   resnet: depths = blocks per layer (4 entries); `bottleneck` picks the block type.
struct EncoderConfig {
  EncoderFamily family = EncoderFamily::kDeit;
  int64_t in_channels = 3;
  int64_t patch_size = 16;
  int64_t stride = 16;
  std::vector<int64_t> dims{768};
  std::vector<int64_t> depths{12};
  std::vector<int64_t> heads{12};
  std::vector<double> mlp_ratios{4.0};
  std::vector<int64_t> sr_ratios{};
  std::vector<int64_t> taps{3, 6, 9, 12};
  bool readout = true;
  bool bottleneck = false;
  // Grid of the learned positional embedding (deit). Inputs with another grid
  // get a bicubic-resampled embedding. See with_input_size().
  int64_t pos_grid_h = 0;
  int64_t pos_grid_w = 0;

  int64_t num_stages() const;
  // Factor the input height and width must be divisible by.
  int64_t downsampling() const;
  // Channels of each tap feature, in tap order.
  std::vector<int64_t> tap_channels() const;
  void validate() const;
  void validate_input(int64_t height, int64_t width) const;
  // Copy with the positional grid set to the patch grid of an HxW input when unset.
  EncoderConfig with_input_size(int64_t height, int64_t width) const;

  static EncoderConfig deit_base();
  static EncoderConfig pvt_b4();
  static EncoderConfig resnet(int layers);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct TokenSequence {
  torch::Tensor tokens;  // [B, N (+1 readout), d]
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  bool has_readout = false;
};

// One decoder input. Token taps are [B, N(+1), C] on a grid_h x grid_w patch
// grid; image taps are [B, C, grid_h, grid_w].
struct TapFeature {
  torch::Tensor data;
  int64_t grid_h = 0;
  int64_t grid_w = 0;
  bool is_tokens = false;
  bool has_readout = false;
};

// trunc_normal_(std) on [-2std, 2std]; inverse-CDF sampling.
void trunc_normal_(torch::Tensor t, double std);

class MlpImpl : public torch::nn::Module {
 public:
  MlpImpl(int64_t dim, int64_t hidden, bool depthwise);
  torch::Tensor forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w);

 private:
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Conv2d dwconv_{nullptr};
};
TORCH_MODULE(Mlp);

// Multi-head self-attention; sr_ratio > 1 shrinks keys/values with a strided conv.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int64_t dim, int64_t heads, int64_t sr_ratio);
  torch::Tensor forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w);

 private:
  int64_t heads_;
  int64_t sr_ratio_;
  double scale_;
  torch::nn::Linear q_{nullptr}, kv_{nullptr}, proj_{nullptr};
  torch::nn::Conv2d sr_{nullptr};
  torch::nn::LayerNorm sr_norm_{nullptr};
};
TORCH_MODULE(Attention);

class TransformerBlockImpl : public torch::nn::Module {
 public:
  TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio, int64_t sr_ratio,
                       bool depthwise_mlp);
  torch::Tensor forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  Attention attn_{nullptr};
  Mlp mlp_{nullptr};
};
TORCH_MODULE(TransformerBlock);

class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderConfig& cfg) : cfg_(cfg) {}
  const EncoderConfig& config() const { return cfg_; }
  virtual std::vector<TapFeature> forward(const torch::Tensor& image) = 0;

 protected:
  EncoderConfig cfg_;
};

// Plain ViT: patch embedding + optional readout token + learned positions.
class DeitEncoderImpl : public EncoderImpl {
 public:
  explicit DeitEncoderImpl(const EncoderConfig& cfg);
  TokenSequence embed(const torch::Tensor& image);
  std::vector<TapFeature> encode(const TokenSequence& seq);
  std::vector<TapFeature> forward(const torch::Tensor& image) override;
  // Copies a 3-channel patch-embedding kernel into this (possibly 6-channel)
  // embedding, repeating it over input channel groups and dividing by the group count.
  void load_replicated_embed(const torch::Tensor& weight3, const torch::Tensor& bias);

 private:
  torch::Tensor positional_embedding(int64_t grid_h, int64_t grid_w);

  torch::nn::Conv2d patch_embed_{nullptr};
  torch::Tensor readout_token_;
  torch::Tensor pos_embed_;
  torch::nn::ModuleList blocks_{nullptr};
  torch::nn::LayerNorm norm_{nullptr};
};

// Pyramid transformer with overlapping patch embeddings and spatial-reduction attention.
class PvtEncoderImpl : public EncoderImpl {
 public:
  explicit PvtEncoderImpl(const EncoderConfig& cfg);
  TokenSequence embed(const torch::Tensor& image);
  std::vector<TapFeature> encode(const TokenSequence& seq);
  std::vector<TapFeature> forward(const torch::Tensor& image) override;

 private:
  std::vector<torch::nn::Conv2d> embeds_;
  std::vector<torch::nn::LayerNorm> embed_norms_;
  std::vector<torch::nn::ModuleList> stages_;
  std::vector<torch::nn::LayerNorm> stage_norms_;
};

class ResnetEncoderImpl : public EncoderImpl {
 public:
  explicit ResnetEncoderImpl(const EncoderConfig& cfg);
  std::vector<TapFeature> forward(const torch::Tensor& image) override;

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr};
  std::vector<torch::nn::Sequential> layers_;
};

std::shared_ptr<EncoderImpl> make_encoder(const EncoderConfig& cfg);

// Token sequence <-> image-like map on a grid (readout already removed).
torch::Tensor tokens_to_image(const torch::Tensor& tokens, int64_t grid_h, int64_t grid_w);
torch::Tensor image_to_tokens(const torch::Tensor& image);

// Mean/std normalisation applied to [0,1] images before every encoder.
torch::Tensor normalize_input(const torch::Tensor& image);

}  // namespace monosfm::nets
