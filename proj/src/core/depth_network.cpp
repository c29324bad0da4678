#include "depth_network.hpp"

#include <string>

#include "errors.hpp"

namespace monosfm::nets {

namespace F = torch::nn::functional;

namespace {

torch::Tensor upsample2(const torch::Tensor& x, bool align_corners = true) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(align_corners));
}

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, bool bias = true) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(bias));
}

torch::nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias = true) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(bias));
}

}  // namespace

// --- configuration ------------------------------------------------------------

void ReassembleConfig::validate() const {
  for (const auto& t : taps) {
    if (t.channels <= 0) throw ConfigError("reassemble.channels", "must be positive");
    if ((t.resample == Resample::kTransposeConv || t.resample == Resample::kStridedConv) &&
        t.factor <= 0) {
      throw ConfigError("reassemble.factor", "resampling factor must be positive");
    }
  }
}

ReassembleConfig ReassembleConfig::depth_default(const EncoderConfig& enc) {
  ReassembleConfig c;
  switch (enc.family) {
    case EncoderFamily::kDeit:
      c.taps = {{ReadMode::kDropReadout, 96, Resample::kTransposeConv, 4},
                {ReadMode::kDropReadout, 768, Resample::kTransposeConv, 8},
                {ReadMode::kDropReadout, 1536, Resample::kNone, 0},
                {ReadMode::kDropReadout, 3072, Resample::kStridedConv, 3}};
      break;
    case EncoderFamily::kPvt: {
      const auto ch = enc.tap_channels();
      c.taps = {{ReadMode::kNone, ch[0], Resample::kNone, 0},
                {ReadMode::kNone, ch[1], Resample::kNone, 0},
                {ReadMode::kNone, ch[2], Resample::kNone, 0},
                {ReadMode::kNone, ch[3], Resample::kReshape, 0}};
      break;
    }
    case EncoderFamily::kResnet:
      break;  // CNN taps are already image-like
  }
  return c;
}

TapReassemble pose_reassemble_default(const EncoderConfig& enc) {
  switch (enc.family) {
    case EncoderFamily::kDeit:
      return {ReadMode::kDropReadout, 2048, Resample::kNone, 0};
    case EncoderFamily::kPvt:
      return {ReadMode::kNone, enc.tap_channels().back(), Resample::kReshape, 0};
    case EncoderFamily::kResnet:
      return {ReadMode::kNone, enc.tap_channels().back(), Resample::kNone, 0};
  }
  return {};
}

void DepthNetConfig::validate() const {
  encoder.validate();
  if (encoder.in_channels != 3) throw ConfigError("depth.encoder.in_channels", "depth input is RGB");
  encoder.validate_input(height, width);
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) {
    throw ConfigError("min_depth", "need 0 < min_depth < max_depth");
  }
  if (fusion_channels <= 0 || head_channels <= 0) {
    throw ConfigError("fusion_channels", "decoder widths must be positive");
  }
  if (encoder.family == EncoderFamily::kResnet) {
    if (!reassemble.taps.empty()) {
      throw ConfigError("depth.reassemble", "resnet features bypass the reassemble stage");
    }
    return;
  }
  if (decoder == DecoderKind::kNative) {
    throw ConfigError("depth.decoder", "the native decoder is only available for resnet encoders");
  }
  reassemble.validate();
  if (reassemble.taps.size() != 4 || encoder.taps.size() != 4) {
    throw ConfigError("depth.reassemble", "the fusion decoder needs exactly four taps");
  }
  if (encoder.family == EncoderFamily::kDeit) {
    // Output stride of each reassembled map; the decoder needs 4, 8, 16, 32.
    for (size_t i = 0; i < 4; ++i) {
      const auto& t = reassemble.taps[i];
      int64_t s = encoder.stride;
      if (t.resample == Resample::kTransposeConv) s = t.factor;
      if (t.resample == Resample::kStridedConv) s = 2 * encoder.stride;
      if (s != (int64_t{4} << i)) {
        throw ConfigError("depth.reassemble", "tap " + std::to_string(i + 1) + " ends at stride " +
                                                  std::to_string(s) + ", expected " +
                                                  std::to_string(int64_t{4} << i));
      }
    }
  }
}

// --- reassemble ---------------------------------------------------------------

ReassembleImpl::ReassembleImpl(const TapReassemble& cfg, int64_t token_dim, int64_t embed_stride)
    : cfg_(cfg) {
  switch (cfg_.resample) {
    case Resample::kReshape:
      if (cfg_.channels != token_dim) {
        throw ConfigError("reassemble.channels", "reshape keeps the token dimension (" +
                                                     std::to_string(token_dim) + ")");
      }
      return;
    case Resample::kNone:
      if (cfg_.read == ReadMode::kNone && cfg_.channels == token_dim) return;
      break;
    default:
      break;
  }
  project_ = register_module("project", conv1x1(token_dim, cfg_.channels));
  if (cfg_.resample == Resample::kTransposeConv) {
    if (embed_stride % cfg_.factor != 0) {
      throw ConfigError("reassemble.factor", "embedding stride must be divisible by alpha");
    }
    const auto k = embed_stride / cfg_.factor;
    upsample_ = register_module(
        "upsample", torch::nn::ConvTranspose2d(
                        torch::nn::ConvTranspose2dOptions(cfg_.channels, cfg_.channels, k).stride(k)));
  } else if (cfg_.resample == Resample::kStridedConv) {
    downsample_ = register_module(
        "downsample", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.channels, cfg_.channels, cfg_.factor)
                                            .stride(2)
                                            .padding(1)));
  }
}

torch::Tensor ReassembleImpl::forward(const TapFeature& tap) {
  torch::Tensor x;
  if (tap.is_tokens) {
    auto tokens = tap.data;
    if (tap.has_readout) {
      if (cfg_.read != ReadMode::kDropReadout) {
        throw ShapeError("tap carries a readout token but the reassemble read mode keeps none");
      }
      tokens = tokens.narrow(1, 1, tokens.size(1) - 1);
    }
    x = tokens_to_image(tokens, tap.grid_h, tap.grid_w);
  } else {
    x = tap.data;
  }
  if (project_) x = project_(x);
  if (upsample_) x = upsample_(x);
  if (downsample_) x = downsample_(x);
  return x;
}

// --- fusion decoder -----------------------------------------------------------

ResidualConvUnitImpl::ResidualConvUnitImpl(int64_t channels, bool batch_norm) {
  conv1_ = register_module("conv1", conv3x3(channels, channels, !batch_norm));
  conv2_ = register_module("conv2", conv3x3(channels, channels, !batch_norm));
  if (batch_norm) {
    bn1_ = register_module("bn1", torch::nn::BatchNorm2d(channels));
    bn2_ = register_module("bn2", torch::nn::BatchNorm2d(channels));
  }
}

torch::Tensor ResidualConvUnitImpl::forward(const torch::Tensor& x) {
  auto out = conv1_(torch::relu(x));
  if (bn1_) out = bn1_(out);
  out = conv2_(torch::relu(out));
  if (bn2_) out = bn2_(out);
  return out + x;
}

FusionBlockImpl::FusionBlockImpl(int64_t channels, bool batch_norm, bool with_skip) {
  if (with_skip) rcu1_ = register_module("rcu1", ResidualConvUnit(channels, batch_norm));
  rcu2_ = register_module("rcu2", ResidualConvUnit(channels, batch_norm));
  out_conv_ = register_module("out_conv", conv1x1(channels, channels));
}

torch::Tensor FusionBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& skip) {
  auto out = x;
  if (skip.defined()) {
    if (!rcu1_) throw ShapeError("fusion block was built without a skip input");
    out = out + rcu1_(skip);
  }
  out = rcu2_(out);
  return out_conv_(upsample2(out));
}

DisparityHeadImpl::DisparityHeadImpl(int64_t in_channels, int64_t hidden) {
  conv1_ = register_module("conv1", conv3x3(in_channels, hidden));
  conv2_ = register_module("conv2", conv1x1(hidden, 1));
}

torch::Tensor DisparityHeadImpl::forward(const torch::Tensor& x) {
  return torch::sigmoid(conv2_(upsample2(torch::relu(conv1_(x)))));
}

FusionDecoderImpl::FusionDecoderImpl(const std::vector<int64_t>& in_channels, int64_t channels,
                                     int64_t head_channels, bool batch_norm) {
  if (in_channels.size() != 4) throw ConfigError("decoder", "fusion decoder takes four inputs");
  for (size_t i = 0; i < 4; ++i) {
    const auto n = std::to_string(i + 1);
    layer_rn_.push_back(register_module("layer" + n + "_rn", conv3x3(in_channels[i], channels, false)));
    fusion_.push_back(register_module("refinenet" + n, FusionBlock(channels, batch_norm, i < 3)));
    heads_.push_back(register_module("head" + n, DisparityHead(channels, head_channels)));
  }
}

std::vector<torch::Tensor> FusionDecoderImpl::forward(const std::vector<torch::Tensor>& pyramid) {
  if (pyramid.size() != 4) throw ShapeError("fusion decoder expects four feature maps");
  std::array<torch::Tensor, 4> rn;
  for (size_t i = 0; i < 4; ++i) rn[i] = layer_rn_[i](pyramid[i]);

  std::array<torch::Tensor, 4> path;
  path[3] = fusion_[3](rn[3]);
  for (int i = 2; i >= 0; --i) {
    auto prev = path[i + 1];
    if (prev.sizes().slice(2) != rn[i].sizes().slice(2)) {
      throw ShapeError("fusion inputs do not halve in resolution between levels");
    }
    path[i] = fusion_[i](prev, rn[i]);
  }
  std::vector<torch::Tensor> disps;
  for (size_t i = 0; i < 4; ++i) disps.push_back(heads_[i](path[i]));
  return disps;
}

// --- native CNN decoder -------------------------------------------------------

NativeDepthDecoderImpl::NativeDepthDecoderImpl(const std::vector<int64_t>& enc_channels) {
  if (enc_channels.size() != 5) throw ConfigError("decoder", "native decoder takes five taps");
  const std::array<int64_t, 5> dec{16, 32, 64, 128, 256};
  auto block = [](int64_t in, int64_t out) {
    return torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, 3).padding(1).padding_mode(torch::kReflect));
  };
  upconv0_.resize(5, nullptr);
  upconv1_.resize(5, nullptr);
  for (int i = 4; i >= 0; --i) {
    const auto in0 = i == 4 ? enc_channels[4] : dec[i + 1];
    upconv0_[i] = register_module("upconv" + std::to_string(i) + "_0", block(in0, dec[i]));
    const auto in1 = dec[i] + (i > 0 ? enc_channels[i - 1] : 0);
    upconv1_[i] = register_module("upconv" + std::to_string(i) + "_1", block(in1, dec[i]));
  }
  for (int s = 0; s < 4; ++s) {
    dispconv_.push_back(register_module("dispconv" + std::to_string(s), block(dec[s], 1)));
  }
}

std::vector<torch::Tensor> NativeDepthDecoderImpl::forward(const std::vector<torch::Tensor>& features) {
  if (features.size() != 5) throw ShapeError("native decoder expects five feature maps");
  std::vector<torch::Tensor> disps(4);
  auto x = features[4];
  for (int i = 4; i >= 0; --i) {
    x = F::elu(upconv0_[i](x));
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .scale_factor(std::vector<double>{2.0, 2.0})
                              .mode(torch::kNearest));
    if (i > 0) x = torch::cat({x, features[i - 1]}, 1);
    x = F::elu(upconv1_[i](x));
    if (i < 4) disps[i] = torch::sigmoid(dispconv_[i](x));
  }
  return disps;
}

// --- depth network ------------------------------------------------------------

DepthNetworkImpl::DepthNetworkImpl(const DepthNetConfig& cfg) : cfg_(cfg) {
  cfg_.encoder = cfg_.encoder.with_input_size(cfg_.height, cfg_.width);
  cfg_.validate();
  encoder_ = register_module("encoder", make_encoder(cfg_.encoder));

  const auto tap_channels = cfg_.encoder.tap_channels();
  if (cfg_.encoder.family == EncoderFamily::kResnet) {
    if (cfg_.decoder == DecoderKind::kNative) {
      native_ = register_module("decoder", NativeDepthDecoder(tap_channels));
    } else {
      fusion_ = register_module(
          "decoder", FusionDecoder(std::vector<int64_t>(tap_channels.begin() + 1, tap_channels.end()),
                                   cfg_.fusion_channels, cfg_.head_channels, cfg_.batch_norm));
    }
    return;
  }
  std::vector<int64_t> pyramid_channels;
  for (size_t i = 0; i < cfg_.reassemble.taps.size(); ++i) {
    const auto& t = cfg_.reassemble.taps[i];
    reassemble_.push_back(register_module("reassemble" + std::to_string(i + 1),
                                          Reassemble(t, tap_channels[i], cfg_.encoder.stride)));
    pyramid_channels.push_back(t.channels);
  }
  fusion_ = register_module("decoder", FusionDecoder(pyramid_channels, cfg_.fusion_channels,
                                                     cfg_.head_channels, cfg_.batch_norm));
}

DepthOutput DepthNetworkImpl::forward_full(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("depth network expects [B,3,H,W]");
  cfg_.encoder.validate_input(image.size(2), image.size(3));
  DepthOutput out;
  out.taps = encoder_->forward(image);
  if (cfg_.encoder.family == EncoderFamily::kResnet) {
    std::vector<torch::Tensor> feats;
    for (const auto& t : out.taps) feats.push_back(t.data);
    if (native_) {
      out.reassembled = feats;
      out.disparities = native_(feats);
    } else {
      out.reassembled.assign(feats.begin() + 1, feats.end());
      out.disparities = fusion_(out.reassembled);
    }
    return out;
  }
  for (size_t i = 0; i < reassemble_.size(); ++i) {
    out.reassembled.push_back(reassemble_[i](out.taps[i]));
  }
  out.disparities = fusion_(out.reassembled);
  return out;
}

torch::Tensor disparity_to_depth(const torch::Tensor& disp, double min_depth, double max_depth) {
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) {
    throw DomainError("need 0 < min_depth < max_depth");
  }
  const double min_disp = 1.0 / max_depth;
  const double max_disp = 1.0 / min_depth;
  return 1.0 / (min_disp + (max_disp - min_disp) * disp);
}

}  // namespace monosfm::nets
