#include "encoders.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace monosfm::nets {

namespace F = torch::nn::functional;

std::string to_string(EncoderFamily f) {
  switch (f) {
    case EncoderFamily::kDeit:
      return "deit";
    case EncoderFamily::kPvt:
      return "pvt";
    case EncoderFamily::kResnet:
      return "resnet";
  }
  return "?";
}

EncoderFamily encoder_family_from_string(const std::string& s) {
  if (s == "deit") return EncoderFamily::kDeit;
  if (s == "pvt") return EncoderFamily::kPvt;
  if (s == "resnet") return EncoderFamily::kResnet;
  throw ConfigError("family", "unknown encoder family '" + s + "' (deit, pvt, resnet)");
}

int64_t EncoderConfig::num_stages() const {
  switch (family) {
    case EncoderFamily::kDeit:
      return depths.empty() ? 0 : depths.front();
    case EncoderFamily::kPvt:
    case EncoderFamily::kResnet:
      return static_cast<int64_t>(depths.size());
  }
  return 0;
}

int64_t EncoderConfig::downsampling() const {
  switch (family) {
    case EncoderFamily::kDeit:
      return 2 * stride;
    case EncoderFamily::kPvt:
      return 8 * stride;
    case EncoderFamily::kResnet:
      return 32;
  }
  return 1;
}

std::vector<int64_t> EncoderConfig::tap_channels() const {
  switch (family) {
    case EncoderFamily::kDeit:
      return std::vector<int64_t>(taps.size(), dims.front());
    case EncoderFamily::kPvt:
      return dims;
    case EncoderFamily::kResnet: {
      const int64_t e = bottleneck ? 4 : 1;
      return {64, 64 * e, 128 * e, 256 * e, 512 * e};
    }
  }
  return {};
}

void EncoderConfig::validate() const {
  if (in_channels != 3 && in_channels != 6) {
    throw ConfigError("in_channels", "must be 3 (depth) or 6 (pose)");
  }
  if (family == EncoderFamily::kResnet) {
    if (depths.size() != 4) throw ConfigError("depths", "resnet needs 4 layer depths");
    for (auto d : depths)
      if (d <= 0) throw ConfigError("depths", "layer depths must be positive");
    return;
  }
  if (patch_size <= 0 || stride <= 0) throw ConfigError("patch_size", "must be positive");
  if (stride > patch_size) {
    throw ConfigError("stride", "embedding stride must not exceed the patch size");
  }
  if (family == EncoderFamily::kDeit) {
    if (dims.size() != 1 || depths.size() != 1 || heads.size() != 1 || mlp_ratios.size() != 1) {
      throw ConfigError("dims", "deit encoder takes a single dim/depth/heads/mlp_ratio");
    }
    if ((patch_size - stride) % 2 != 0) {
      throw ConfigError("patch_size", "patch_size - stride must be even for deit");
    }
    if (taps.empty()) throw ConfigError("taps", "at least one tap is required");
    if (!std::is_sorted(taps.begin(), taps.end())) throw ConfigError("taps", "must be ascending");
    if (taps.front() < 1 || taps.back() > num_stages()) {
      throw ConfigError("taps", "tap stages must lie in [1, num_stages]");
    }
  } else {
    const auto n = dims.size();
    if (n != 4 || depths.size() != n || heads.size() != n || mlp_ratios.size() != n ||
        sr_ratios.size() != n) {
      throw ConfigError("dims", "pvt encoder needs 4 stages of dims/depths/heads/mlp_ratios/sr_ratios");
    }
    if (readout) throw ConfigError("readout", "pvt encoder has no readout token");
  }
  for (size_t i = 0; i < dims.size(); ++i) {
    const auto h = heads.size() == dims.size() ? heads[i] : heads.front();
    if (dims[i] <= 0 || h <= 0 || dims[i] % h != 0) {
      throw ConfigError("heads", "feature dim must be a positive multiple of the head count");
    }
  }
}

void EncoderConfig::validate_input(int64_t height, int64_t width) const {
  const auto f = downsampling();
  if (height <= 0 || width <= 0 || height % f != 0 || width % f != 0) {
    throw ConfigError("image_size", "input " + std::to_string(height) + "x" + std::to_string(width) +
                                        " is not divisible by the encoder downsampling factor " +
                                        std::to_string(f));
  }
}

EncoderConfig EncoderConfig::with_input_size(int64_t height, int64_t width) const {
  EncoderConfig out = *this;
  if (family == EncoderFamily::kDeit && (pos_grid_h <= 0 || pos_grid_w <= 0)) {
    out.pos_grid_h = height / stride;
    out.pos_grid_w = width / stride;
  }
  return out;
}

EncoderConfig EncoderConfig::deit_base() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::pvt_b4() {
  EncoderConfig c;
  c.family = EncoderFamily::kPvt;
  c.patch_size = 7;
  c.stride = 4;
  c.dims = {64, 128, 320, 512};
  c.depths = {3, 8, 27, 3};
  c.heads = {1, 2, 5, 8};
  c.mlp_ratios = {8, 8, 4, 4};
  c.sr_ratios = {8, 4, 2, 1};
  c.taps = {1, 2, 3, 4};
  c.readout = false;
  return c;
}

EncoderConfig EncoderConfig::resnet(int layers) {
  EncoderConfig c;
  c.family = EncoderFamily::kResnet;
  c.readout = false;
  c.dims = {};
  c.heads = {};
  c.mlp_ratios = {};
  c.taps = {1, 2, 3, 4, 5};
  switch (layers) {
    case 18:
      c.depths = {2, 2, 2, 2};
      break;
    case 34:
      c.depths = {3, 4, 6, 3};
      break;
    case 50:
      c.depths = {3, 4, 6, 3};
      c.bottleneck = true;
      break;
    case 101:
      c.depths = {3, 4, 23, 3};
      c.bottleneck = true;
      break;
    default:
      throw ConfigError("layers", "supported resnet depths: 18, 34, 50, 101");
  }
  return c;
}

void trunc_normal_(torch::Tensor t, double std) {
  torch::NoGradGuard guard;
  // Inverse CDF on [-2, 2] standard deviations.
  const double lo = 0.5 * (1.0 + std::erf(-2.0 / std::sqrt(2.0)));
  const double hi = 0.5 * (1.0 + std::erf(2.0 / std::sqrt(2.0)));
  t.uniform_(2 * lo - 1, 2 * hi - 1);
  t.erfinv_();
  t.mul_(std * std::sqrt(2.0));
  t.clamp_(-2 * std, 2 * std);
}

namespace {

void init_linear(torch::nn::Linear& l) {
  trunc_normal_(l->weight, 0.02);
  if (l->bias.defined()) torch::nn::init::zeros_(l->bias);
}

}  // namespace

torch::Tensor tokens_to_image(const torch::Tensor& tokens, int64_t grid_h, int64_t grid_w) {
  if (tokens.dim() != 3 || tokens.size(1) != grid_h * grid_w) {
    throw ShapeError("token count " + std::to_string(tokens.dim() == 3 ? tokens.size(1) : -1) +
                     " does not factor into a " + std::to_string(grid_h) + "x" +
                     std::to_string(grid_w) + " grid");
  }
  return tokens.transpose(1, 2).reshape({tokens.size(0), tokens.size(2), grid_h, grid_w});
}

torch::Tensor image_to_tokens(const torch::Tensor& image) {
  return image.flatten(2).transpose(1, 2);
}

torch::Tensor normalize_input(const torch::Tensor& image) { return (image - 0.45) / 0.225; }

// --- transformer building blocks -------------------------------------------

MlpImpl::MlpImpl(int64_t dim, int64_t hidden, bool depthwise) {
  fc1_ = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, dim));
  init_linear(fc1_);
  init_linear(fc2_);
  if (depthwise) {
    dwconv_ = register_module(
        "dwconv", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, hidden, 3).padding(1).groups(hidden)));
  }
}

torch::Tensor MlpImpl::forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w) {
  auto h = fc1_(x);
  if (dwconv_) {
    h = image_to_tokens(dwconv_(tokens_to_image(h, grid_h, grid_w)));
  }
  return fc2_(F::gelu(h));
}

AttentionImpl::AttentionImpl(int64_t dim, int64_t heads, int64_t sr_ratio)
    : heads_(heads), sr_ratio_(sr_ratio), scale_(1.0 / std::sqrt(static_cast<double>(dim / heads))) {
  q_ = register_module("q", torch::nn::Linear(dim, dim));
  kv_ = register_module("kv", torch::nn::Linear(dim, 2 * dim));
  proj_ = register_module("proj", torch::nn::Linear(dim, dim));
  init_linear(q_);
  init_linear(kv_);
  init_linear(proj_);
  if (sr_ratio_ > 1) {
    sr_ = register_module(
        "sr", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, sr_ratio_).stride(sr_ratio_)));
    sr_norm_ = register_module("sr_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  }
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w) {
  const auto b = x.size(0);
  const auto n = x.size(1);
  const auto c = x.size(2);
  const auto dh = c / heads_;
  auto q = q_(x).view({b, n, heads_, dh}).transpose(1, 2);

  auto kv_in = x;
  if (sr_) {
    kv_in = sr_norm_(image_to_tokens(sr_(tokens_to_image(x, grid_h, grid_w))));
  }
  const auto m = kv_in.size(1);
  auto kv = kv_(kv_in).view({b, m, 2, heads_, dh}).permute({2, 0, 3, 1, 4});
  auto k = kv[0];
  auto v = kv[1];

  auto attn = torch::softmax(torch::matmul(q, k.transpose(-2, -1)) * scale_, -1);
  auto out = torch::matmul(attn, v).transpose(1, 2).reshape({b, n, c});
  return proj_(out);
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio,
                                           int64_t sr_ratio, bool depthwise_mlp) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  attn_ = register_module("attn", Attention(dim, heads, sr_ratio));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  mlp_ = register_module("mlp", Mlp(dim, static_cast<int64_t>(dim * mlp_ratio), depthwise_mlp));
}

torch::Tensor TransformerBlockImpl::forward(const torch::Tensor& x, int64_t grid_h, int64_t grid_w) {
  auto y = x + attn_(norm1_(x), grid_h, grid_w);
  return y + mlp_(norm2_(y), grid_h, grid_w);
}

// --- DeiT-like ----------------------------------------------------------------

DeitEncoderImpl::DeitEncoderImpl(const EncoderConfig& cfg) : EncoderImpl(cfg) {
  cfg_.validate();
  const auto d = cfg_.dims.front();
  patch_embed_ = register_module(
      "patch_embed",
      torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.in_channels, d, cfg_.patch_size)
                            .stride(cfg_.stride)
                            .padding((cfg_.patch_size - cfg_.stride) / 2)));
  if (cfg_.readout) {
    readout_token_ = register_parameter("readout_token", torch::zeros({1, 1, d}));
    trunc_normal_(readout_token_, 0.02);
  }
  if (cfg_.pos_grid_h <= 0 || cfg_.pos_grid_w <= 0) {
    throw ConfigError("pos_grid", "deit encoder needs a positional embedding grid");
  }
  {
    const auto n = cfg_.pos_grid_h * cfg_.pos_grid_w + (cfg_.readout ? 1 : 0);
    pos_embed_ = register_parameter("pos_embed", torch::zeros({1, n, d}));
    trunc_normal_(pos_embed_, 0.02);
  }
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < cfg_.depths.front(); ++i) {
    blocks_->push_back(TransformerBlock(d, cfg_.heads.front(), cfg_.mlp_ratios.front(), 1, false));
  }
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d}).eps(1e-6)));
}

torch::Tensor DeitEncoderImpl::positional_embedding(int64_t grid_h, int64_t grid_w) {
  if (grid_h == cfg_.pos_grid_h && grid_w == cfg_.pos_grid_w) return pos_embed_;
  const int64_t lead = cfg_.readout ? 1 : 0;
  auto spatial = pos_embed_.narrow(1, lead, cfg_.pos_grid_h * cfg_.pos_grid_w);
  auto grid = tokens_to_image(spatial, cfg_.pos_grid_h, cfg_.pos_grid_w);
  grid = F::interpolate(grid, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{grid_h, grid_w})
                                  .mode(torch::kBicubic)
                                  .align_corners(false));
  auto resized = image_to_tokens(grid);
  return lead ? torch::cat({pos_embed_.narrow(1, 0, 1), resized}, 1) : resized;
}

TokenSequence DeitEncoderImpl::embed(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != cfg_.in_channels) {
    throw ShapeError("deit embed expects [B," + std::to_string(cfg_.in_channels) + ",H,W]");
  }
  if (image.size(2) % cfg_.stride != 0 || image.size(3) % cfg_.stride != 0) {
    throw ConfigError("image_size", "input size is not divisible by the embedding stride");
  }
  auto x = patch_embed_(image);
  TokenSequence seq;
  seq.grid_h = x.size(2);
  seq.grid_w = x.size(3);
  auto tokens = image_to_tokens(x);
  if (cfg_.readout) {
    tokens = torch::cat({readout_token_.expand({tokens.size(0), 1, tokens.size(2)}), tokens}, 1);
  }
  seq.tokens = tokens + positional_embedding(seq.grid_h, seq.grid_w);
  seq.has_readout = cfg_.readout;
  return seq;
}

std::vector<TapFeature> DeitEncoderImpl::encode(const TokenSequence& seq) {
  std::vector<TapFeature> taps;
  auto x = seq.tokens;
  size_t next_tap = 0;
  const auto n_blocks = static_cast<int64_t>(blocks_->size());
  for (int64_t i = 0; i < n_blocks; ++i) {
    x = blocks_[i]->as<TransformerBlock>()->forward(x, seq.grid_h, seq.grid_w);
    auto out = (i + 1 == n_blocks) ? norm_(x) : x;
    while (next_tap < cfg_.taps.size() && cfg_.taps[next_tap] == i + 1) {
      taps.push_back({out, seq.grid_h, seq.grid_w, true, seq.has_readout});
      ++next_tap;
    }
  }
  return taps;
}

std::vector<TapFeature> DeitEncoderImpl::forward(const torch::Tensor& image) {
  return encode(embed(normalize_input(image)));
}

void DeitEncoderImpl::load_replicated_embed(const torch::Tensor& weight3, const torch::Tensor& bias) {
  torch::NoGradGuard guard;
  if (weight3.size(1) != 3) throw ShapeError("replicated embedding source must have 3 input channels");
  const auto groups = cfg_.in_channels / 3;
  patch_embed_->weight.copy_(weight3.repeat({1, groups, 1, 1}) / static_cast<double>(groups));
  if (bias.defined()) patch_embed_->bias.copy_(bias);
}

// --- PVT-like -----------------------------------------------------------------

PvtEncoderImpl::PvtEncoderImpl(const EncoderConfig& cfg) : EncoderImpl(cfg) {
  cfg_.validate();
  for (size_t s = 0; s < 4; ++s) {
    const auto in = s == 0 ? cfg_.in_channels : cfg_.dims[s - 1];
    const auto k = s == 0 ? cfg_.patch_size : 3;
    const auto st = s == 0 ? cfg_.stride : 2;
    const auto name = std::to_string(s + 1);
    embeds_.push_back(register_module(
        "patch_embed" + name,
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, cfg_.dims[s], k).stride(st).padding(k / 2))));
    embed_norms_.push_back(register_module(
        "embed_norm" + name, torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg_.dims[s]}))));
    auto blocks = torch::nn::ModuleList();
    for (int64_t b = 0; b < cfg_.depths[s]; ++b) {
      blocks->push_back(TransformerBlock(cfg_.dims[s], cfg_.heads[s], cfg_.mlp_ratios[s],
                                         cfg_.sr_ratios[s], true));
    }
    stages_.push_back(register_module("stage" + name, blocks));
    stage_norms_.push_back(register_module(
        "norm" + name, torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg_.dims[s]}).eps(1e-6))));
  }
}

TokenSequence PvtEncoderImpl::embed(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != cfg_.in_channels) {
    throw ShapeError("pvt embed expects [B," + std::to_string(cfg_.in_channels) + ",H,W]");
  }
  if (image.size(2) % cfg_.stride != 0 || image.size(3) % cfg_.stride != 0) {
    throw ConfigError("image_size", "input size is not divisible by the embedding stride");
  }
  auto x = embeds_[0](image);
  return {embed_norms_[0](image_to_tokens(x)), x.size(2), x.size(3), false};
}

std::vector<TapFeature> PvtEncoderImpl::encode(const TokenSequence& seq) {
  std::vector<TapFeature> taps;
  auto tokens = seq.tokens;
  int64_t gh = seq.grid_h;
  int64_t gw = seq.grid_w;
  for (size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      auto x = embeds_[s](tokens_to_image(tokens, gh, gw));
      gh = x.size(2);
      gw = x.size(3);
      tokens = embed_norms_[s](image_to_tokens(x));
    }
    for (const auto& blk : *stages_[s]) {
      tokens = blk->as<TransformerBlock>()->forward(tokens, gh, gw);
    }
    tokens = stage_norms_[s](tokens);
    if (s < 3) {
      taps.push_back({tokens_to_image(tokens, gh, gw), gh, gw, false, false});
    } else {
      // The last stage is handed over as tokens; the decoder reshapes it.
      taps.push_back({tokens, gh, gw, true, false});
    }
  }
  return taps;
}

std::vector<TapFeature> PvtEncoderImpl::forward(const torch::Tensor& image) {
  return encode(embed(normalize_input(image)));
}

// --- ResNet-like --------------------------------------------------------------

namespace {

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in, int64_t planes, int64_t stride, bool bottleneck) {
    const int64_t expansion = bottleneck ? 4 : 1;
    const int64_t out = planes * expansion;
    if (bottleneck) {
      convs_ = register_module(
          "convs",
          torch::nn::Sequential(
              torch::nn::Conv2d(torch::nn::Conv2dOptions(in, planes, 1).bias(false)),
              torch::nn::BatchNorm2d(planes), torch::nn::ReLU(),
              torch::nn::Conv2d(torch::nn::Conv2dOptions(planes, planes, 3).stride(stride).padding(1).bias(false)),
              torch::nn::BatchNorm2d(planes), torch::nn::ReLU(),
              torch::nn::Conv2d(torch::nn::Conv2dOptions(planes, out, 1).bias(false)),
              torch::nn::BatchNorm2d(out)));
    } else {
      convs_ = register_module(
          "convs",
          torch::nn::Sequential(
              torch::nn::Conv2d(torch::nn::Conv2dOptions(in, planes, 3).stride(stride).padding(1).bias(false)),
              torch::nn::BatchNorm2d(planes), torch::nn::ReLU(),
              torch::nn::Conv2d(torch::nn::Conv2dOptions(planes, out, 3).padding(1).bias(false)),
              torch::nn::BatchNorm2d(out)));
    }
    if (stride != 1 || in != out) {
      downsample_ = register_module(
          "downsample",
          torch::nn::Sequential(
              torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
              torch::nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto identity = downsample_ ? downsample_->forward(x) : x;
    return torch::relu(convs_->forward(x) + identity);
  }

 private:
  torch::nn::Sequential convs_{nullptr};
  torch::nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(BasicBlock);

}  // namespace

ResnetEncoderImpl::ResnetEncoderImpl(const EncoderConfig& cfg) : EncoderImpl(cfg) {
  cfg_.validate();
  conv1_ = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(cfg_.in_channels, 64, 7).stride(2).padding(3).bias(false)));
  bn1_ = register_module("bn1", torch::nn::BatchNorm2d(64));
  const int64_t expansion = cfg_.bottleneck ? 4 : 1;
  int64_t in = 64;
  const std::array<int64_t, 4> planes{64, 128, 256, 512};
  for (size_t l = 0; l < 4; ++l) {
    torch::nn::Sequential layer;
    for (int64_t b = 0; b < cfg_.depths[l]; ++b) {
      const int64_t stride = (b == 0 && l > 0) ? 2 : 1;
      layer->push_back(BasicBlock(in, planes[l], stride, cfg_.bottleneck));
      in = planes[l] * expansion;
    }
    layers_.push_back(register_module("layer" + std::to_string(l + 1), layer));
  }
}

std::vector<TapFeature> ResnetEncoderImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != cfg_.in_channels) {
    throw ShapeError("resnet encoder expects [B," + std::to_string(cfg_.in_channels) + ",H,W]");
  }
  std::vector<TapFeature> taps;
  auto x = torch::relu(bn1_(conv1_(normalize_input(image))));
  taps.push_back({x, x.size(2), x.size(3), false, false});
  x = F::max_pool2d(x, F::MaxPool2dFuncOptions(3).stride(2).padding(1));
  for (auto& layer : layers_) {
    x = layer->forward(x);
    taps.push_back({x, x.size(2), x.size(3), false, false});
  }
  return taps;
}

std::shared_ptr<EncoderImpl> make_encoder(const EncoderConfig& cfg) {
  switch (cfg.family) {
    case EncoderFamily::kDeit:
      return std::make_shared<DeitEncoderImpl>(cfg);
    case EncoderFamily::kPvt:
      return std::make_shared<PvtEncoderImpl>(cfg);
    case EncoderFamily::kResnet:
      return std::make_shared<ResnetEncoderImpl>(cfg);
  }
  throw ConfigError("family", "unknown encoder family");
}

}  // namespace monosfm::nets
