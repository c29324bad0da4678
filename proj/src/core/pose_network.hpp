#pragma once

#include <torch/torch.h>

#include <optional>

#include "depth_network.hpp"
#include "encoders.hpp"

namespace monosfm::nets {

struct PoseNetConfig {
  EncoderConfig encoder = [] {
    auto e = EncoderConfig::deit_base();
    e.in_channels = 6;
    e.taps = {12};
    return e;
  }();
  TapReassemble reassemble = {ReadMode::kDropReadout, 2048, Resample::kNone, 0};
  int64_t decoder_channels = 256;
  double output_scale = 0.01;
  bool learn_intrinsics = false;
  int64_t height = 192;
  int64_t width = 640;

  void validate() const;
  friend bool operator==(const PoseNetConfig&, const PoseNetConfig&) = default;
};

// Intrinsics in pixels, one entry per batch element.
struct IntrinsicsPrediction {
  torch::Tensor fx, fy, cx, cy;  // [B]
  torch::Tensor matrix() const;  // [B,3,3]
};

struct PosePrediction {
  torch::Tensor pose;  // [B,6] = (rx, ry, rz, tx, ty, tz)
  std::optional<IntrinsicsPrediction> intrinsics;
};

// Global average pool of the penultimate pose-decoder activations followed by
// two pointwise branches: softplus focal lengths and linear principal point.
// Outputs are in normalised image units and scaled by (W, H).
class IntrinsicsHeadImpl : public torch::nn::Module {
 public:
  explicit IntrinsicsHeadImpl(int64_t channels);
  IntrinsicsPrediction forward(const torch::Tensor& penultimate, int64_t height, int64_t width);

 private:
  torch::nn::Conv2d focal_{nullptr}, principal_{nullptr};
};
TORCH_MODULE(IntrinsicsHead);

struct PoseDecoderOutput {
  torch::Tensor pose;         // [B,6], already multiplied by the output scale
  torch::Tensor penultimate;  // [B,C,h,w] before its activation
};

class PoseDecoderImpl : public torch::nn::Module {
 public:
  PoseDecoderImpl(int64_t in_channels, int64_t channels, double output_scale);
  PoseDecoderOutput forward(const torch::Tensor& feature);

 private:
  double output_scale_;
  torch::nn::Conv2d squeeze_{nullptr}, conv0_{nullptr}, conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(PoseDecoder);

class PoseNetworkImpl : public torch::nn::Module {
 public:
  explicit PoseNetworkImpl(const PoseNetConfig& cfg);
  const PoseNetConfig& config() const { return cfg_; }

  // pair: [B,6,H,W], two RGB frames stacked along channels (earlier frame first).
  torch::Tensor encode(const torch::Tensor& pair);
  PosePrediction forward(const torch::Tensor& pair);
  PosePrediction forward(const torch::Tensor& first, const torch::Tensor& second) {
    return forward(torch::cat({first, second}, 1));
  }
  EncoderImpl& encoder() { return *encoder_; }

 private:
  PoseNetConfig cfg_;
  std::shared_ptr<EncoderImpl> encoder_;
  Reassemble reassemble_{nullptr};
  PoseDecoder decoder_{nullptr};
  IntrinsicsHead intrinsics_{nullptr};
};
TORCH_MODULE(PoseNetwork);

}  // namespace monosfm::nets
