#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "dataset.hpp"
#include "trainer.hpp"

namespace monosfm::robust {

enum class AttackKind { kPgd, kHflip, kVflip };

std::string to_string(AttackKind k);

struct AttackSpec {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 1.0;    // on the 0-255 intensity scale
  double step_size = 1.0;  // on the 0-255 intensity scale

  // epsilon must be 0 or on the attack's grid.
  void validate() const;
  int64_t iterations() const;
};

// Epsilon grids: untargeted {0.25, 0.5, 1, 2, 4, 8, 16}, targeted {1, 2, 4}.
const std::vector<double>& untargeted_epsilons();
const std::vector<double>& targeted_epsilons();

// floor(min(eps + 4, ceil(1.25 * eps))).
int64_t pgd_iterations(double epsilon);

// "pgd:4", "hflip:2", "vflip:1".
AttackSpec parse_attack_spec(const std::string& text);

// Untargeted PGD on the training objective. All frames present in `clean`
// ([0,1] images) are perturbed jointly by sign-gradient ascent with step
// step_size/255, projected onto the eps/255 L-inf ball and clipped to [0,1].
// The loss is train::compute_batch_loss; the networks run in eval mode.
data::Batch pgd_untargeted(train::Models& models, const data::Batch& clean, const config::RunConfig& cfg,
                           const AttackSpec& spec, uint64_t seed = 0);

// Targeted attack on the depth-input frame: descends the RMSE between the
// predicted depth and the flipped clean prediction. image: [B,3,H,W].
torch::Tensor targeted_flip_attack(nets::DepthNetwork& depth, const torch::Tensor& image, const AttackSpec& spec,
                                   double min_depth, double max_depth);

// Scale-0 depth of the depth network, [B,1,H,W].
torch::Tensor predict_depth(nets::DepthNetwork& depth, const torch::Tensor& image, double min_depth,
                            double max_depth);

// The flip target for a clean depth map [B,1,H,W].
torch::Tensor flip_target(const torch::Tensor& depth, AttackKind kind);

double rmse(const torch::Tensor& a, const torch::Tensor& b);

}  // namespace monosfm::robust
