#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "depth_network.hpp"
#include "losses.hpp"
#include "pose_network.hpp"

// Run configuration. One JSON document per run:
//
// {
//   "model": {
//     "encoder": { "family": "deit" | "pvt" | "resnet", ... EncoderConfig fields },
//     "decoder": "fusion" | "native",
//     "fusion_channels": 96, "head_channels": 32, "batch_norm": true,
//     "reassemble": [ {"read": "drop", "channels": 96, "resample": "transpose", "factor": 4}, ... ],
//     "pose_encoder": { ... },            // defaults to the depth encoder with 6 input channels
//     "pose_reassemble": { ... },
//     "pose_channels": 256, "pose_scale": 0.01,
//     "min_depth": 0.1, "max_depth": 100
//   },
//   "data":  { "format": "synthetic" | "kitti" | "ddad", "root", "split", "height", "width",
//              "synthetic": { SyntheticOptions fields, "sequences": 1, "intrinsics": true } },
//   "train": { TrainConfig fields },
//   "loss":  { LossOptions fields },
//   "eval":  { "cap", "min_depth", "median_scaling", "split", "odometry_lengths", "align_scale" },
//   "output_dir": "runs/name"
// }
//
// Missing keys take defaults; unknown keys are rejected. A missing "family"
// picks that family's preset before any other field is applied.

namespace monosfm::config {

using nlohmann::json;

enum class IntrinsicsMode { kGiven, kLearned };
enum class OptimizerKind { kAuto, kAdam, kAdamW };

struct DataConfig {
  std::string format = "synthetic";
  std::string root;
  std::string split;
  int64_t height = 192;
  int64_t width = 640;
  data::SyntheticOptions synthetic;
  int64_t synthetic_sequences = 1;
  bool synthetic_intrinsics = true;  // false: synthetic triplets carry no camera matrix

  bool is_synthetic() const { return format == "synthetic"; }
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct TrainConfig {
  int64_t batch_size = 12;
  int64_t epochs = 20;
  int64_t max_steps = 0;  // 0: run all epochs
  OptimizerKind optimizer = OptimizerKind::kAuto;
  double lr = 0.0;        // 0: 1e-4 for CNN encoders, 1e-5 for transformers
  int64_t decay_epoch = 15;
  double decay_factor = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;  // AdamW only
  uint64_t seed = 0;
  IntrinsicsMode intrinsics = IntrinsicsMode::kGiven;
  bool color_jitter = true;
  bool flip = true;
  int64_t checkpoint_every = 0;  // steps; 0: end of every epoch only
  int64_t log_every = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalConfig {
  double cap = 0.0;  // 0: 80 for kitti, 200 for ddad, max_depth for synthetic
  double min_depth = 1e-3;
  bool median_scaling = true;
  std::string split;
  std::vector<double> odometry_lengths{100, 200, 300, 400, 500, 600, 700, 800};
  bool align_scale = true;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
  nets::DepthNetConfig depth;
  nets::PoseNetConfig pose;
  loss::LossOptions loss;
  DataConfig data;
  TrainConfig train;
  EvalConfig eval;
  std::string output_dir = "runs/default";

  // Effective values after family-dependent defaults.
  OptimizerKind optimizer() const;
  double learning_rate() const;
  double eval_cap() const;
  bool learn_intrinsics() const { return train.intrinsics == IntrinsicsMode::kLearned; }

  // Cross-field checks; throws ConfigError naming the field.
  void validate() const;
  // The data section alone, for tools that render or read datasets without a model.
  void validate_data() const;
};

// Parses a configuration document. Throws ConfigError with the dotted field name.
RunConfig from_json(const json& doc);
json to_json(const RunConfig& cfg);
// Only the architecture part; two checkpoints with equal model JSON are interchangeable.
json model_json(const RunConfig& cfg);

// Applies "a.b.c=value" overrides; the value is parsed as JSON and falls back to a string.
void apply_override(json& doc, const std::string& assignment);

// Reads a file (empty path: all defaults), applies overrides, parses and validates.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// SHA-256 of the canonical JSON dump of a resolved configuration.
std::string config_hash(const RunConfig& cfg);

std::string to_string(IntrinsicsMode m);
std::string to_string(OptimizerKind k);

}  // namespace monosfm::config
