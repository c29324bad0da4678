#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "depth_network.hpp"
#include "losses.hpp"
#include "pose_network.hpp"

namespace monosfm::train {

struct Models {
  nets::DepthNetwork depth{nullptr};
  nets::PoseNetwork pose{nullptr};

  void train(bool on = true);
  std::vector<torch::Tensor> parameters() const;
};

// Builds both networks with seeded initialisation.
Models build_models(const config::RunConfig& cfg);

struct BatchOutputs {
  loss::LossReport report;
  std::vector<torch::Tensor> disparities;  // scales 0..3
  torch::Tensor k;                         // [B,3,3] used for the warps
  torch::Tensor to_prev, to_next;          // [B,4,4] target -> source, undefined if missing
  std::optional<nets::IntrinsicsPrediction> intrinsics;  // mean of both pairs when learned
};

// Forward pass of both networks and the training objective on one batch.
// `inputs` feed the networks (possibly colour-augmented); `targets` are the
// raw frames the appearance loss compares. Boundary batches may miss one
// neighbour, in which case only the feasible pair is used. Untargeted
// attacks call this same function.
BatchOutputs compute_batch_loss(Models& models, const data::Batch& inputs, const data::Batch& targets,
                                const config::RunConfig& cfg, torch::Generator generator = {});

// Brightness/contrast/saturation jitter shared by the three frames of each triplet.
data::Batch color_jitter(const data::Batch& b, std::mt19937_64& rng, double strength = 0.2, double prob = 0.5);

// Learning rate at a 0-based epoch: lr, then lr * decay_factor from decay_epoch on.
double learning_rate_at(const config::RunConfig& cfg, int64_t epoch);

// Per-epoch sample order, a function of the seed and the epoch only.
std::vector<size_t> epoch_order(uint64_t seed, int64_t epoch, size_t n);

struct TrainState {
  int64_t epoch = 0;           // epoch in progress
  int64_t step = 0;            // optimiser steps taken
  int64_t batch_in_epoch = 0;  // batches of `epoch` already consumed
};

struct StepRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  double photometric = 0.0;
  double smoothness = 0.0;
  double mask_coverage = 0.0;
  std::optional<std::array<double, 4>> intrinsics;  // batch mean fx, fy, cx, cy
};

nlohmann::json to_json(const StepRecord& r);

class Trainer {
 public:
  // `run_dir` receives checkpoints and the JSON-lines log; empty disables files.
  Trainer(config::RunConfig cfg, std::shared_ptr<const data::TripletSource> data,
          std::filesystem::path run_dir = {});

  // One optimisation step on an already collated batch.
  StepRecord step(const data::Batch& batch);
  // Runs until the configured epochs or max_steps. `on_step` may return false to stop.
  TrainState run(const std::function<bool(const StepRecord&)>& on_step = {});

  void resume(const std::filesystem::path& checkpoint);
  void save(const std::filesystem::path& path) const;

  Models& models() { return models_; }
  const config::RunConfig& config() const { return cfg_; }
  const TrainState& state() const { return state_; }
  torch::optim::Optimizer& optimizer() { return *optimizer_; }
  std::filesystem::path latest_checkpoint() const;

 private:
  void set_lr(double lr);
  void log(const StepRecord& r);

  config::RunConfig cfg_;
  std::shared_ptr<const data::TripletSource> data_;
  std::filesystem::path run_dir_;
  Models models_;
  std::unique_ptr<torch::optim::Optimizer> optimizer_;
  torch::Generator generator_;
  std::mt19937_64 aug_rng_;
  TrainState state_;
};

// Training data described by the config: rendered synthetic sequences or a dataset on disk.
std::shared_ptr<const data::TripletSource> make_training_source(const config::RunConfig& cfg);

}  // namespace monosfm::train
