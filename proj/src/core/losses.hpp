#pragma once

#include <torch/torch.h>

#include <optional>
#include <utility>
#include <vector>

namespace monosfm::loss {

struct LossOptions {
  double ssim_weight = 0.85;          // alpha in the photometric error
  double smoothness_weight = 1e-3;    // lambda, divided by 2^scale per scale
  double identity_noise = 1e-5;       // tie-break noise subtracted from identity errors
  double ssim_c1 = 0.01 * 0.01;
  double ssim_c2 = 0.03 * 0.03;
  bool automask = true;
};

// Per-pixel SSIM over 3x3 reflection-padded windows. a, b: [B,C,H,W].
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, double c1 = 0.01 * 0.01,
                   double c2 = 0.03 * 0.03);

// (alpha/2)(1 - SSIM) + (1 - alpha)|a - b|, averaged over channels -> [B,1,H,W].
torch::Tensor photometric_error(const torch::Tensor& target, const torch::Tensor& synthesized,
                                const LossOptions& opts = {});

struct MaskedReprojection {
  torch::Tensor error;      // [B,1,H,W] per-pixel minimum reprojection error
  torch::Tensor mask;       // [B,1,H,W] bool, pixels that contribute
  torch::Tensor per_image;  // [B] mean error over the mask (0 when the mask is empty)
};

// Minimum reprojection over synthesized views with auto-masking. A pixel
// contributes when its best synthesized error is strictly below the best
// error of the raw (unwarped) sources. `valid` (per view, optional) removes
// pixels whose sample left the source frame.
MaskedReprojection min_reprojection_with_automask(
    const torch::Tensor& target, const std::vector<torch::Tensor>& synthesized,
    const std::vector<torch::Tensor>& identity_sources, const std::vector<torch::Tensor>& valid = {},
    const LossOptions& opts = {}, torch::Generator generator = {});

// Edge-aware smoothness of mean-normalised disparity. disp [B,1,H,W], image [B,3,H,W].
torch::Tensor smoothness(const torch::Tensor& disp, const torch::Tensor& image);

struct LossReport {
  torch::Tensor total;        // differentiable scalar
  double photometric = 0.0;   // mean over scales
  double smoothness = 0.0;    // mean over scales of smoothness / 2^scale
  double mask_coverage = 0.0; // fraction of pixels kept, averaged over scales and batch
  // Resolution (H, W) at which each photometric evaluation ran.
  std::vector<std::pair<int64_t, int64_t>> photometric_resolutions;
};

// One warp from a source frame into the target view.
struct SourceView {
  torch::Tensor image;      // [B,3,H,W] raw source frame
  torch::Tensor transform;  // [B,4,4] target -> source
};

// Multi-scale appearance loss. Every disparity is upsampled to the target
// resolution, converted to depth, used to warp each source, and scored with
// the auto-masked minimum reprojection error plus lambda/2^s smoothness.
// The result is the mean over scales. Throws TrainingError on non-finite values.
LossReport total_loss(const torch::Tensor& target, const std::vector<SourceView>& sources,
                      const std::vector<torch::Tensor>& disparities, const torch::Tensor& k,
                      double min_depth, double max_depth, const LossOptions& opts = {},
                      torch::Generator generator = {});

}  // namespace monosfm::loss
