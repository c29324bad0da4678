#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "util.hpp"

namespace monosfm::config {

namespace {

using nets::EncoderConfig;
using nets::EncoderFamily;
using nets::ReadMode;
using nets::Resample;
using nets::TapReassemble;

// Reads fields of one JSON object, tracking which keys were used so that
// leftovers (typos) can be reported with their full dotted path.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!obj_.contains(key)) return;
    used_.insert(key);
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(field(key), "wrong type (got " + obj_.at(key).dump() + ")");
    }
  }

  const json* child(const std::string& key) {
    if (!obj_.contains(key)) return nullptr;
    used_.insert(key);
    return &obj_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!used_.count(k)) throw ConfigError(field(k), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

// Re-throws nested validation errors with the dotted prefix of their section.
template <typename F>
void with_prefix(const std::string& prefix, F&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    std::string field = e.field();
    const std::string msg = std::string(e.what()).substr(field.empty() ? 0 : field.size() + 2);
    if (field.rfind(prefix, 0) != 0) field = field.empty() ? prefix : prefix + "." + field;
    throw ConfigError(field, msg);
  }
}

EncoderConfig preset(EncoderFamily family, int layers) {
  switch (family) {
    case EncoderFamily::kDeit: return EncoderConfig::deit_base();
    case EncoderFamily::kPvt: return EncoderConfig::pvt_b4();
    case EncoderFamily::kResnet: return EncoderConfig::resnet(layers);
  }
  return {};
}

EncoderConfig parse_encoder(const json& j, const std::string& path, std::optional<EncoderConfig> base) {
  Reader r(j, path);
  std::string family_name;
  r.get("family", family_name);
  int layers = 18;
  r.get("layers", layers);
  EncoderConfig e;
  if (!family_name.empty()) {
    EncoderFamily family;
    with_prefix(r.field("family"), [&] { family = nets::encoder_family_from_string(family_name); });
    with_prefix(r.field("layers"), [&] { e = preset(family, layers); });
    if (base && base->family == family) {
      e = *base;
      if (family == EncoderFamily::kResnet && r.has("layers")) e = preset(family, layers);
    }
  } else if (base) {
    e = *base;
  } else {
    e = EncoderConfig::deit_base();
  }
  r.get("in_channels", e.in_channels);
  r.get("patch_size", e.patch_size);
  r.get("stride", e.stride);
  r.get("dims", e.dims);
  r.get("depths", e.depths);
  r.get("heads", e.heads);
  r.get("mlp_ratios", e.mlp_ratios);
  r.get("sr_ratios", e.sr_ratios);
  r.get("taps", e.taps);
  r.get("readout", e.readout);
  r.get("bottleneck", e.bottleneck);
  r.get("pos_grid_h", e.pos_grid_h);
  r.get("pos_grid_w", e.pos_grid_w);
  r.finish();
  return e;
}

json encoder_json(const EncoderConfig& e) {
  return json{{"family", nets::to_string(e.family)}, {"in_channels", e.in_channels},
              {"patch_size", e.patch_size},            {"stride", e.stride},
              {"dims", e.dims},                        {"depths", e.depths},
              {"heads", e.heads},                      {"mlp_ratios", e.mlp_ratios},
              {"sr_ratios", e.sr_ratios},              {"taps", e.taps},
              {"readout", e.readout},                  {"bottleneck", e.bottleneck},
              {"pos_grid_h", e.pos_grid_h},            {"pos_grid_w", e.pos_grid_w}};
}

std::string read_mode_name(ReadMode m) { return m == ReadMode::kDropReadout ? "drop" : "none"; }

std::string resample_name(Resample r) {
  switch (r) {
    case Resample::kNone: return "none";
    case Resample::kTransposeConv: return "transpose";
    case Resample::kStridedConv: return "strided";
    case Resample::kReshape: return "reshape";
  }
  return "none";
}

TapReassemble parse_tap(const json& j, const std::string& path, TapReassemble t) {
  Reader r(j, path);
  std::string read = read_mode_name(t.read);
  std::string resample = resample_name(t.resample);
  r.get("read", read);
  r.get("channels", t.channels);
  r.get("resample", resample);
  r.get("factor", t.factor);
  r.finish();
  if (read == "drop") {
    t.read = ReadMode::kDropReadout;
  } else if (read == "none") {
    t.read = ReadMode::kNone;
  } else {
    throw ConfigError(r.field("read"), "expected drop or none");
  }
  if (resample == "none") {
    t.resample = Resample::kNone;
  } else if (resample == "transpose") {
    t.resample = Resample::kTransposeConv;
  } else if (resample == "strided") {
    t.resample = Resample::kStridedConv;
  } else if (resample == "reshape") {
    t.resample = Resample::kReshape;
  } else {
    throw ConfigError(r.field("resample"), "expected none, transpose, strided or reshape");
  }
  return t;
}

json tap_json(const TapReassemble& t) {
  return json{{"read", read_mode_name(t.read)},
              {"channels", t.channels},
              {"resample", resample_name(t.resample)},
              {"factor", t.factor}};
}

void parse_model(const json& j, RunConfig& cfg) {
  Reader r(j, "model");
  if (const auto* enc = r.child("encoder")) cfg.depth.encoder = parse_encoder(*enc, "model.encoder", std::nullopt);
  cfg.depth.reassemble = nets::ReassembleConfig::depth_default(cfg.depth.encoder);
  cfg.depth.decoder = cfg.depth.encoder.family == EncoderFamily::kResnet ? nets::DecoderKind::kNative
                                                                          : nets::DecoderKind::kFusion;
  std::string decoder;
  r.get("decoder", decoder);
  if (decoder == "fusion") {
    cfg.depth.decoder = nets::DecoderKind::kFusion;
  } else if (decoder == "native") {
    cfg.depth.decoder = nets::DecoderKind::kNative;
  } else if (!decoder.empty()) {
    throw ConfigError("model.decoder", "expected fusion or native");
  }
  if (cfg.depth.encoder.family == EncoderFamily::kResnet) cfg.depth.reassemble.taps.clear();
  r.get("fusion_channels", cfg.depth.fusion_channels);
  r.get("head_channels", cfg.depth.head_channels);
  r.get("batch_norm", cfg.depth.batch_norm);
  r.get("min_depth", cfg.depth.min_depth);
  r.get("max_depth", cfg.depth.max_depth);
  if (const auto* re = r.child("reassemble")) {
    if (!re->is_array()) throw ConfigError("model.reassemble", "expected a list of taps");
    std::vector<TapReassemble> taps;
    for (size_t i = 0; i < re->size(); ++i) {
      const auto base = i < cfg.depth.reassemble.taps.size() ? cfg.depth.reassemble.taps[i] : TapReassemble{};
      taps.push_back(parse_tap((*re)[i], "model.reassemble." + std::to_string(i), base));
    }
    cfg.depth.reassemble.taps = taps;
  }

  auto pose_base = cfg.depth.encoder;
  pose_base.in_channels = 6;
  if (pose_base.family == EncoderFamily::kDeit) pose_base.taps = {pose_base.num_stages()};
  if (const auto* enc = r.child("pose_encoder")) {
    cfg.pose.encoder = parse_encoder(*enc, "model.pose_encoder", pose_base);
  } else {
    cfg.pose.encoder = pose_base;
  }
  cfg.pose.reassemble = nets::pose_reassemble_default(cfg.pose.encoder);
  if (const auto* re = r.child("pose_reassemble")) {
    cfg.pose.reassemble = parse_tap(*re, "model.pose_reassemble", cfg.pose.reassemble);
  }
  r.get("pose_channels", cfg.pose.decoder_channels);
  r.get("pose_scale", cfg.pose.output_scale);
  r.finish();
}

void parse_data(const json& j, DataConfig& d) {
  Reader r(j, "data");
  r.get("format", d.format);
  r.get("root", d.root);
  r.get("split", d.split);
  r.get("height", d.height);
  r.get("width", d.width);
  if (const auto* s = r.child("synthetic")) {
    Reader rs(*s, "data.synthetic");
    auto& o = d.synthetic;
    rs.get("frames", o.num_frames);
    rs.get("seed", o.seed);
    rs.get("focal_ratio", o.focal_ratio);
    rs.get("speed", o.speed);
    rs.get("yaw_rate", o.yaw_rate);
    rs.get("camera_height", o.camera_height);
    rs.get("half_width", o.half_width);
    rs.get("end_distance", o.end_distance);
    rs.get("supersample", o.supersample);
    rs.get("sequences", d.synthetic_sequences);
    rs.get("intrinsics", d.synthetic_intrinsics);
    rs.finish();
  }
  r.finish();
  if (d.format != "synthetic") {
    with_prefix("data.format", [&] { data::dataset_format_from_string(d.format); });
  }
  d.synthetic.height = d.height;
  d.synthetic.width = d.width;
}

void parse_train(const json& j, TrainConfig& t) {
  Reader r(j, "train");
  r.get("batch_size", t.batch_size);
  r.get("epochs", t.epochs);
  r.get("max_steps", t.max_steps);
  std::string opt = to_string(t.optimizer);
  r.get("optimizer", opt);
  if (opt == "auto") {
    t.optimizer = OptimizerKind::kAuto;
  } else if (opt == "adam") {
    t.optimizer = OptimizerKind::kAdam;
  } else if (opt == "adamw") {
    t.optimizer = OptimizerKind::kAdamW;
  } else {
    throw ConfigError("train.optimizer", "expected auto, adam or adamw");
  }
  r.get("lr", t.lr);
  r.get("decay_epoch", t.decay_epoch);
  r.get("decay_factor", t.decay_factor);
  r.get("beta1", t.beta1);
  r.get("beta2", t.beta2);
  r.get("weight_decay", t.weight_decay);
  r.get("seed", t.seed);
  std::string intr = to_string(t.intrinsics);
  r.get("intrinsics", intr);
  if (intr == "given") {
    t.intrinsics = IntrinsicsMode::kGiven;
  } else if (intr == "learned") {
    t.intrinsics = IntrinsicsMode::kLearned;
  } else {
    throw ConfigError("train.intrinsics", "expected given or learned");
  }
  r.get("color_jitter", t.color_jitter);
  r.get("flip", t.flip);
  r.get("checkpoint_every", t.checkpoint_every);
  r.get("log_every", t.log_every);
  r.finish();
}

void parse_loss(const json& j, loss::LossOptions& l) {
  Reader r(j, "loss");
  r.get("ssim_weight", l.ssim_weight);
  r.get("smoothness_weight", l.smoothness_weight);
  r.get("identity_noise", l.identity_noise);
  r.get("ssim_c1", l.ssim_c1);
  r.get("ssim_c2", l.ssim_c2);
  r.get("automask", l.automask);
  r.finish();
}

void parse_eval(const json& j, EvalConfig& e) {
  Reader r(j, "eval");
  r.get("cap", e.cap);
  r.get("min_depth", e.min_depth);
  r.get("median_scaling", e.median_scaling);
  r.get("split", e.split);
  r.get("odometry_lengths", e.odometry_lengths);
  r.get("align_scale", e.align_scale);
  r.finish();
}

}  // namespace

std::string to_string(IntrinsicsMode m) { return m == IntrinsicsMode::kGiven ? "given" : "learned"; }

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kAuto: return "auto";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kAdamW: return "adamw";
  }
  return "auto";
}

OptimizerKind RunConfig::optimizer() const {
  if (train.optimizer != OptimizerKind::kAuto) return train.optimizer;
  return depth.encoder.family == EncoderFamily::kResnet ? OptimizerKind::kAdam : OptimizerKind::kAdamW;
}

double RunConfig::learning_rate() const {
  if (train.lr > 0.0) return train.lr;
  return depth.encoder.family == EncoderFamily::kResnet ? 1e-4 : 1e-5;
}

double RunConfig::eval_cap() const {
  if (eval.cap > 0.0) return eval.cap;
  if (data.format == "kitti") return 80.0;
  if (data.format == "ddad") return 200.0;
  return depth.max_depth;
}

void RunConfig::validate_data() const {
  if (data.height <= 0) throw ConfigError("data.height", "must be positive");
  if (data.width <= 0) throw ConfigError("data.width", "must be positive");
  if (data.is_synthetic()) {
    if (data.synthetic.num_frames < 3) throw ConfigError("data.synthetic.frames", "need at least 3 frames");
    if (data.synthetic_sequences <= 0) throw ConfigError("data.synthetic.sequences", "must be positive");
    if (data.synthetic.supersample < 1) throw ConfigError("data.synthetic.supersample", "must be >= 1");
    if (train.intrinsics == IntrinsicsMode::kGiven && !data.synthetic_intrinsics) {
      throw ConfigError("train.intrinsics", "intrinsics=given needs ground-truth camera matrices");
    }
  } else if (data.root.empty()) {
    throw ConfigError("data.root", "required for on-disk datasets");
  }
}

void RunConfig::validate() const {
  with_prefix("model", [&] { depth.validate(); });
  with_prefix("model", [&] { pose.validate(); });
  if (train.batch_size <= 0) throw ConfigError("train.batch_size", "must be positive");
  if (train.epochs <= 0) throw ConfigError("train.epochs", "must be positive");
  if (train.max_steps < 0) throw ConfigError("train.max_steps", "must not be negative");
  if (train.lr < 0.0) throw ConfigError("train.lr", "must be positive");
  if (train.decay_epoch < 0 || train.decay_epoch >= train.epochs) {
    throw ConfigError("train.decay_epoch", "must lie in [0, epochs)");
  }
  if (!(train.decay_factor > 0.0)) throw ConfigError("train.decay_factor", "must be positive");
  if (!(train.beta1 >= 0.0 && train.beta1 < 1.0)) throw ConfigError("train.beta1", "must lie in [0, 1)");
  if (!(train.beta2 >= 0.0 && train.beta2 < 1.0)) throw ConfigError("train.beta2", "must lie in [0, 1)");
  if (train.weight_decay < 0.0) throw ConfigError("train.weight_decay", "must not be negative");
  if (train.log_every <= 0) throw ConfigError("train.log_every", "must be positive");
  if (!(loss.ssim_weight >= 0.0 && loss.ssim_weight <= 1.0)) {
    throw ConfigError("loss.ssim_weight", "must lie in [0, 1]");
  }
  if (loss.smoothness_weight < 0.0) throw ConfigError("loss.smoothness_weight", "must not be negative");
  if (loss.identity_noise < 0.0) throw ConfigError("loss.identity_noise", "must not be negative");
  validate_data();
  if (eval.cap < 0.0) throw ConfigError("eval.cap", "must not be negative");
  if (!(eval.min_depth > 0.0)) throw ConfigError("eval.min_depth", "must be positive");
  if (!(eval_cap() > eval.min_depth)) throw ConfigError("eval.cap", "must exceed eval.min_depth");
  for (double len : eval.odometry_lengths) {
    if (!(len > 0.0)) throw ConfigError("eval.odometry_lengths", "lengths must be positive");
  }
}

RunConfig from_json(const json& doc) {
  RunConfig cfg;
  Reader r(doc, "");
  if (const auto* m = r.child("model")) {
    parse_model(*m, cfg);
  } else {
    parse_model(json::object(), cfg);
  }
  if (const auto* d = r.child("data")) parse_data(*d, cfg.data);
  else parse_data(json::object(), cfg.data);
  if (const auto* t = r.child("train")) parse_train(*t, cfg.train);
  if (const auto* l = r.child("loss")) parse_loss(*l, cfg.loss);
  if (const auto* e = r.child("eval")) parse_eval(*e, cfg.eval);
  r.get("output_dir", cfg.output_dir);
  r.finish();

  cfg.depth.height = cfg.pose.height = cfg.data.height;
  cfg.depth.width = cfg.pose.width = cfg.data.width;
  cfg.pose.learn_intrinsics = cfg.learn_intrinsics();
  // Fix the positional grid so the resolved config describes the parameters exactly.
  with_prefix("model.encoder", [&] {
    cfg.depth.encoder.validate();
    cfg.depth.encoder = cfg.depth.encoder.with_input_size(cfg.data.height, cfg.data.width);
  });
  with_prefix("model.pose_encoder", [&] {
    cfg.pose.encoder.validate();
    cfg.pose.encoder = cfg.pose.encoder.with_input_size(cfg.data.height, cfg.data.width);
  });
  return cfg;
}

json model_json(const RunConfig& cfg) {
  json reassemble = json::array();
  for (const auto& t : cfg.depth.reassemble.taps) reassemble.push_back(tap_json(t));
  return json{{"encoder", encoder_json(cfg.depth.encoder)},
              {"decoder", cfg.depth.decoder == nets::DecoderKind::kFusion ? "fusion" : "native"},
              {"fusion_channels", cfg.depth.fusion_channels},
              {"head_channels", cfg.depth.head_channels},
              {"batch_norm", cfg.depth.batch_norm},
              {"reassemble", reassemble},
              {"pose_encoder", encoder_json(cfg.pose.encoder)},
              {"pose_reassemble", tap_json(cfg.pose.reassemble)},
              {"pose_channels", cfg.pose.decoder_channels},
              {"pose_scale", cfg.pose.output_scale},
              {"min_depth", cfg.depth.min_depth},
              {"max_depth", cfg.depth.max_depth}};
}

json to_json(const RunConfig& cfg) {
  const auto& s = cfg.data.synthetic;
  const auto& t = cfg.train;
  const auto& l = cfg.loss;
  const auto& e = cfg.eval;
  return json{
      {"model", model_json(cfg)},
      {"data",
       {{"format", cfg.data.format},
        {"root", cfg.data.root},
        {"split", cfg.data.split},
        {"height", cfg.data.height},
        {"width", cfg.data.width},
        {"synthetic",
         {{"frames", s.num_frames},
          {"seed", s.seed},
          {"focal_ratio", s.focal_ratio},
          {"speed", s.speed},
          {"yaw_rate", s.yaw_rate},
          {"camera_height", s.camera_height},
          {"half_width", s.half_width},
          {"end_distance", s.end_distance},
          {"supersample", s.supersample},
          {"sequences", cfg.data.synthetic_sequences},
          {"intrinsics", cfg.data.synthetic_intrinsics}}}}},
      {"train",
       {{"batch_size", t.batch_size},
        {"epochs", t.epochs},
        {"max_steps", t.max_steps},
        {"optimizer", to_string(t.optimizer)},
        {"lr", t.lr},
        {"decay_epoch", t.decay_epoch},
        {"decay_factor", t.decay_factor},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"weight_decay", t.weight_decay},
        {"seed", t.seed},
        {"intrinsics", to_string(t.intrinsics)},
        {"color_jitter", t.color_jitter},
        {"flip", t.flip},
        {"checkpoint_every", t.checkpoint_every},
        {"log_every", t.log_every}}},
      {"loss",
       {{"ssim_weight", l.ssim_weight},
        {"smoothness_weight", l.smoothness_weight},
        {"identity_noise", l.identity_noise},
        {"ssim_c1", l.ssim_c1},
        {"ssim_c2", l.ssim_c2},
        {"automask", l.automask}}},
      {"eval",
       {{"cap", e.cap},
        {"min_depth", e.min_depth},
        {"median_scaling", e.median_scaling},
        {"split", e.split},
        {"odometry_lengths", e.odometry_lengths},
        {"align_scale", e.align_scale}}},
      {"output_dir", cfg.output_dir}};
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(assignment, "override must look like key.path=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError(key, "empty path component");
    path.push_back(part);
  }
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    if (node->is_array()) {
      const auto idx = std::stoul(path[i]);
      if (idx >= node->size()) throw ConfigError(key, "index out of range");
      node = &(*node)[idx];
      continue;
    }
    if (!node->is_object()) throw ConfigError(key, "'" + path[i] + "' is not an object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = json::object();
  }
  if (node->is_array()) {
    const auto idx = std::stoul(path.back());
    if (idx >= node->size()) throw ConfigError(key, "index out of range");
    (*node)[idx] = value;
  } else {
    (*node)[path.back()] = value;
  }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("", "config file " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  auto cfg = from_json(doc);
  cfg.validate();
  return cfg;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(to_json(cfg).dump()); }

}  // namespace monosfm::config
