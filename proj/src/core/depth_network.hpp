#pragma once

#include <torch/torch.h>

#include <vector>

#include "encoders.hpp"

namespace monosfm::nets {

enum class ReadMode { kDropReadout, kNone };
enum class Resample { kNone, kTransposeConv, kStridedConv, kReshape };

// How one encoder tap becomes an image-like feature map.
//   kTransposeConv: factor = alpha, kernel = stride = embed_stride / alpha
//   kStridedConv:   factor = k, k x k conv with stride 2 and padding 1
//   kReshape:       tokens reshaped onto their grid; channels == token dim
struct TapReassemble {
  ReadMode read = ReadMode::kDropReadout;
  int64_t channels = 0;
  Resample resample = Resample::kNone;
  int64_t factor = 0;

  friend bool operator==(const TapReassemble&, const TapReassemble&) = default;
};

struct ReassembleConfig {
  std::vector<TapReassemble> taps;

  void validate() const;
  // Depth-network defaults per encoder family (four taps).
  static ReassembleConfig depth_default(const EncoderConfig& enc);
  friend bool operator==(const ReassembleConfig&, const ReassembleConfig&) = default;
};

// Single-tap pose-network default.
TapReassemble pose_reassemble_default(const EncoderConfig& enc);

class ReassembleImpl : public torch::nn::Module {
 public:
  ReassembleImpl(const TapReassemble& cfg, int64_t token_dim, int64_t embed_stride);
  torch::Tensor forward(const TapFeature& tap);

 private:
  TapReassemble cfg_;
  torch::nn::Conv2d project_{nullptr};
  torch::nn::ConvTranspose2d upsample_{nullptr};
  torch::nn::Conv2d downsample_{nullptr};
};
TORCH_MODULE(Reassemble);

class ResidualConvUnitImpl : public torch::nn::Module {
 public:
  ResidualConvUnitImpl(int64_t channels, bool batch_norm);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
};
TORCH_MODULE(ResidualConvUnit);

// RefineNet-style fusion: merge the skip feature, refine, upsample by 2.
class FusionBlockImpl : public torch::nn::Module {
 public:
  FusionBlockImpl(int64_t channels, bool batch_norm, bool with_skip);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip = {});

 private:
  ResidualConvUnit rcu1_{nullptr}, rcu2_{nullptr};
  torch::nn::Conv2d out_conv_{nullptr};
};
TORCH_MODULE(FusionBlock);

// 3x3 conv -> ReLU -> bilinear x2 -> pointwise conv -> sigmoid.
class DisparityHeadImpl : public torch::nn::Module {
 public:
  DisparityHeadImpl(int64_t in_channels, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(DisparityHead);

// Four-level feature pyramid (strides 4, 8, 16, 32; finest first) ->
// disparities at 1, 1/2, 1/4, 1/8 of the input (finest first).
class FusionDecoderImpl : public torch::nn::Module {
 public:
  FusionDecoderImpl(const std::vector<int64_t>& in_channels, int64_t channels, int64_t head_channels,
                    bool batch_norm);
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& pyramid);

 private:
  std::vector<torch::nn::Conv2d> layer_rn_;
  std::vector<FusionBlock> fusion_;
  std::vector<DisparityHead> heads_;
};
TORCH_MODULE(FusionDecoder);

// U-Net style CNN depth decoder with skip connections over five taps
// (strides 2..32) and sigmoid disparity outputs at scales 0..3.
class NativeDepthDecoderImpl : public torch::nn::Module {
 public:
  explicit NativeDepthDecoderImpl(const std::vector<int64_t>& enc_channels);
  std::vector<torch::Tensor> forward(const std::vector<torch::Tensor>& features);

 private:
  std::vector<torch::nn::Conv2d> upconv0_, upconv1_;
  std::vector<torch::nn::Conv2d> dispconv_;
};
TORCH_MODULE(NativeDepthDecoder);

enum class DecoderKind { kFusion, kNative };

struct DepthNetConfig {
  EncoderConfig encoder = EncoderConfig::deit_base();
  ReassembleConfig reassemble = ReassembleConfig::depth_default(EncoderConfig::deit_base());
  DecoderKind decoder = DecoderKind::kFusion;
  int64_t fusion_channels = 96;
  int64_t head_channels = 32;
  bool batch_norm = true;
  double min_depth = 0.1;
  double max_depth = 100.0;
  int64_t height = 192;
  int64_t width = 640;

  void validate() const;
  friend bool operator==(const DepthNetConfig&, const DepthNetConfig&) = default;
};

struct DepthOutput {
  std::vector<TapFeature> taps;
  std::vector<torch::Tensor> reassembled;  // decoder pyramid, finest first
  std::vector<torch::Tensor> disparities;  // scale 0 (full) .. 3 (1/8), values in (0,1)
};

class DepthNetworkImpl : public torch::nn::Module {
 public:
  explicit DepthNetworkImpl(const DepthNetConfig& cfg);
  const DepthNetConfig& config() const { return cfg_; }
  // image: [B,3,H,W] in [0,1]
  DepthOutput forward_full(const torch::Tensor& image);
  std::vector<torch::Tensor> forward(const torch::Tensor& image) {
    return forward_full(image).disparities;
  }
  EncoderImpl& encoder() { return *encoder_; }

 private:
  DepthNetConfig cfg_;
  std::shared_ptr<EncoderImpl> encoder_;
  std::vector<Reassemble> reassemble_;
  FusionDecoder fusion_{nullptr};
  NativeDepthDecoder native_{nullptr};
};
TORCH_MODULE(DepthNetwork);

// Sigmoid disparity -> depth in (min_depth, max_depth):
//   depth = 1 / (1/max + disp * (1/min - 1/max))
torch::Tensor disparity_to_depth(const torch::Tensor& disp, double min_depth, double max_depth);

}  // namespace monosfm::nets
