#pragma once

#include <torch/torch.h>

#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "attacks.hpp"
#include "config.hpp"
#include "corruptions.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "trainer.hpp"

namespace monosfm::eval {

struct DepthEvalOptions {
  double min_depth = 1e-3;
  double max_depth = 80.0;
  bool median_scaling = true;
};

struct FrameResult {
  metrics::DepthMetrics metrics;
  double ratio = 1.0;  // median(gt) / median(pred)
};

// Median of a 1-D tensor; the mean of the two middle values for even sizes.
double median(const torch::Tensor& values);

// One frame: gt > min and gt < max form the mask, the prediction is scaled
// by median(gt)/median(pred) over that mask and clamped to [min, max].
// Everything runs in float64. nullopt when the mask is empty.
std::optional<FrameResult> evaluate_frame(const torch::Tensor& pred, const torch::Tensor& gt,
                                          const DepthEvalOptions& opts);

struct DepthEvaluation {
  metrics::DepthMetrics mean;
  std::vector<metrics::DepthMetrics> per_frame;
  std::vector<double> ratios;
  size_t skipped = 0;
};

// Per-image metrics averaged over frames. Frames without valid ground truth
// are skipped with a warning.
DepthEvaluation evaluate_depth(const std::vector<torch::Tensor>& preds, const std::vector<torch::Tensor>& gts,
                               const DepthEvalOptions& opts);

struct EvalRequest {
  std::optional<robust::CorruptionSpec> corruption;
  std::optional<robust::AttackSpec> attack;
  uint64_t seed = 0;
  size_t max_frames = 0;  // 0: all
};

struct EvalReport {
  DepthEvaluation depth;
  size_t frames = 0;
  std::optional<metrics::OdometryMetrics> odometry;
  std::optional<geometry::Intrinsics> predicted_k;
  std::optional<metrics::IntrinsicsError> intrinsics_error;
  // Targeted attacks: RMSE between prediction and the flipped clean prediction.
  std::optional<double> target_rmse_clean, target_rmse_adv;
  std::string corruption, attack;

  nlohmann::json to_json() const;
  std::string table(const std::string& label) const;
};

// Disparity at scale 0 resized (bilinear) to height x width, converted to depth. image: [B,3,H,W].
torch::Tensor predict_depth_at(nets::DepthNetwork& depth, const torch::Tensor& image, int64_t height,
                               int64_t width, double min_depth, double max_depth);

// Depth, pose and intrinsics evaluation of a trained model with optional
// corruption or attack applied to the inputs first.
EvalReport evaluate_model(train::Models& models, const config::RunConfig& cfg, const data::TripletSource& data,
                          const EvalRequest& request);

// Evaluation frames: held-out synthetic sequences (seed offset 1000) or
// eval.split on disk, with ground-truth depth.
std::shared_ptr<const data::TripletSource> make_eval_source(const config::RunConfig& cfg);

DepthEvalOptions depth_eval_options(const config::RunConfig& cfg);

}  // namespace monosfm::eval
