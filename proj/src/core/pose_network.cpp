#include "pose_network.hpp"

#include <cmath>

#include "errors.hpp"
#include "geometry.hpp"

namespace monosfm::nets {

namespace F = torch::nn::functional;

void PoseNetConfig::validate() const {
  encoder.validate();
  if (encoder.in_channels != 6) {
    throw ConfigError("pose.encoder.in_channels", "pose input is two stacked RGB frames");
  }
  encoder.validate_input(height, width);
  if (encoder.family == EncoderFamily::kDeit && encoder.taps.back() != encoder.num_stages()) {
    throw ConfigError("pose.encoder.taps", "the pose network reads the final transformer stage");
  }
  if (reassemble.channels <= 0) throw ConfigError("pose.reassemble.channels", "must be positive");
  if (decoder_channels <= 0) throw ConfigError("pose.decoder_channels", "must be positive");
  if (!(output_scale > 0.0)) throw ConfigError("pose.output_scale", "must be positive");
}

torch::Tensor IntrinsicsPrediction::matrix() const {
  return geometry::intrinsics_to_matrix(fx, fy, cx, cy);
}

IntrinsicsHeadImpl::IntrinsicsHeadImpl(int64_t channels) {
  focal_ = register_module("focal", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 2, 1)));
  principal_ = register_module("principal", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 2, 1)));
  torch::NoGradGuard guard;
  // Start near a centred principal point and a focal length of one image width.
  principal_->bias.fill_(0.5);
  focal_->bias.fill_(std::log(std::exp(1.0) - 1.0));
}

IntrinsicsPrediction IntrinsicsHeadImpl::forward(const torch::Tensor& penultimate, int64_t height,
                                                 int64_t width) {
  auto pooled = F::adaptive_avg_pool2d(penultimate, F::AdaptiveAvgPool2dFuncOptions(1));
  auto focal = F::softplus(focal_(pooled)).flatten(1);  // [B,2]
  auto principal = principal_(pooled).flatten(1);
  const auto w = static_cast<double>(width);
  const auto h = static_cast<double>(height);
  return {focal.select(1, 0) * w, focal.select(1, 1) * h, principal.select(1, 0) * w,
          principal.select(1, 1) * h};
}

PoseDecoderImpl::PoseDecoderImpl(int64_t in_channels, int64_t channels, double output_scale)
    : output_scale_(output_scale) {
  squeeze_ = register_module("squeeze", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, channels, 1)));
  conv0_ = register_module("pose0", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv1_ = register_module("pose1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2_ = register_module("pose2", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 6, 1)));
}

PoseDecoderOutput PoseDecoderImpl::forward(const torch::Tensor& feature) {
  auto x = torch::relu(squeeze_(feature));
  x = torch::relu(conv0_(x));
  auto penultimate = conv1_(x);
  auto out = conv2_(torch::relu(penultimate));
  return {out.mean({2, 3}) * output_scale_, penultimate};
}

PoseNetworkImpl::PoseNetworkImpl(const PoseNetConfig& cfg) : cfg_(cfg) {
  cfg_.encoder = cfg_.encoder.with_input_size(cfg_.height, cfg_.width);
  cfg_.validate();
  encoder_ = register_module("encoder", make_encoder(cfg_.encoder));
  int64_t feature_channels = cfg_.encoder.tap_channels().back();
  if (cfg_.encoder.family != EncoderFamily::kResnet) {
    reassemble_ = register_module(
        "reassemble", Reassemble(cfg_.reassemble, feature_channels, cfg_.encoder.stride));
    feature_channels = cfg_.reassemble.channels;
  }
  decoder_ = register_module("decoder", PoseDecoder(feature_channels, cfg_.decoder_channels,
                                                    cfg_.output_scale));
  if (cfg_.learn_intrinsics) {
    intrinsics_ = register_module("intrinsics", IntrinsicsHead(cfg_.decoder_channels));
  }
}

torch::Tensor PoseNetworkImpl::encode(const torch::Tensor& pair) {
  if (pair.dim() != 4 || pair.size(1) != 6) {
    throw ShapeError("pose network expects two stacked RGB frames [B,6,H,W]");
  }
  auto taps = encoder_->forward(pair);
  if (reassemble_) return reassemble_(taps.back());
  return taps.back().data;
}

PosePrediction PoseNetworkImpl::forward(const torch::Tensor& pair) {
  auto decoded = decoder_(encode(pair));
  PosePrediction out{decoded.pose, std::nullopt};
  if (intrinsics_) out.intrinsics = intrinsics_(decoded.penultimate, pair.size(2), pair.size(3));
  return out;
}

}  // namespace monosfm::nets
