#include "attacks.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace monosfm::robust {

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kHflip: return "hflip";
    case AttackKind::kVflip: return "vflip";
  }
  return "pgd";
}

const std::vector<double>& untargeted_epsilons() {
  static const std::vector<double> e{0.25, 0.5, 1, 2, 4, 8, 16};
  return e;
}

const std::vector<double>& targeted_epsilons() {
  static const std::vector<double> e{1, 2, 4};
  return e;
}

int64_t pgd_iterations(double epsilon) {
  if (epsilon < 0.0) throw DomainError("attack epsilon must not be negative");
  return static_cast<int64_t>(std::min(epsilon + 4.0, std::ceil(1.25 * epsilon)));
}

void AttackSpec::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("attack", "step size must be positive");
  if (epsilon == 0.0) return;
  const auto& grid = kind == AttackKind::kPgd ? untargeted_epsilons() : targeted_epsilons();
  if (std::find(grid.begin(), grid.end(), epsilon) == grid.end()) {
    std::string allowed;
    for (double e : grid) allowed += (allowed.empty() ? "" : ", ") + std::to_string(e).substr(0, 4);
    throw ConfigError("attack", to_string(kind) + " epsilon must be one of {" + allowed + "}");
  }
}

int64_t AttackSpec::iterations() const { return pgd_iterations(epsilon); }

AttackSpec parse_attack_spec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("attack", "expected kind:epsilon, got '" + text + "'");
  AttackSpec s;
  const auto kind = text.substr(0, colon);
  if (kind == "pgd") {
    s.kind = AttackKind::kPgd;
  } else if (kind == "hflip") {
    s.kind = AttackKind::kHflip;
  } else if (kind == "vflip") {
    s.kind = AttackKind::kVflip;
  } else {
    throw ConfigError("attack", "unknown attack kind '" + kind + "' (pgd, hflip, vflip)");
  }
  try {
    size_t used = 0;
    s.epsilon = std::stod(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("attack", "epsilon in '" + text + "' is not a number");
  }
  s.validate();
  return s;
}

namespace {

torch::Tensor project(const torch::Tensor& adv, const torch::Tensor& clean, double eps) {
  return torch::min(torch::max(adv, clean - eps), clean + eps).clamp(0.0, 1.0);
}

// Restores the networks' train/eval state on scope exit.
struct EvalScope {
  std::vector<std::pair<torch::nn::Module*, bool>> saved;
  explicit EvalScope(std::vector<torch::nn::Module*> mods) {
    for (auto* m : mods) {
      saved.emplace_back(m, m->is_training());
      m->eval();
    }
  }
  ~EvalScope() {
    for (auto& [m, on] : saved) m->train(on);
  }
};

}  // namespace

data::Batch pgd_untargeted(train::Models& models, const data::Batch& clean, const config::RunConfig& cfg,
                           const AttackSpec& spec, uint64_t seed) {
  if (spec.kind != AttackKind::kPgd) throw ConfigError("attack", "pgd_untargeted needs a pgd spec");
  spec.validate();
  const double eps = spec.epsilon / 255.0;
  const double step = spec.step_size / 255.0;
  const auto iters = spec.iterations();
  if (iters == 0 || eps == 0.0) return clean;

  EvalScope scope({models.depth.ptr().get(), models.pose.ptr().get()});
  auto generator = at::make_generator<at::CPUGeneratorImpl>(seed);

  std::vector<torch::Tensor*> slots;
  data::Batch adv = clean;
  for (auto* t : {&adv.prev, &adv.center, &adv.next}) {
    if (t->defined()) {
      *t = t->detach().clone();
      slots.push_back(t);
    }
  }
  std::vector<const torch::Tensor*> originals;
  for (const auto* t : {&clean.prev, &clean.center, &clean.next}) {
    if (t->defined()) originals.push_back(t);
  }

  for (int64_t i = 0; i < iters; ++i) {
    std::vector<torch::Tensor> leaves;
    for (auto* t : slots) {
      *t = t->detach().requires_grad_(true);
      leaves.push_back(*t);
    }
    auto out = train::compute_batch_loss(models, adv, adv, cfg, generator);
    auto grads = torch::autograd::grad({out.report.total}, leaves, {}, false, false, true);
    torch::NoGradGuard guard;
    for (size_t j = 0; j < slots.size(); ++j) {
      auto g = grads[j].defined() ? grads[j] : torch::zeros_like(leaves[j]);
      *slots[j] = project(leaves[j] + step * g.sign(), *originals[j], eps).detach();
    }
  }
  return adv;
}

torch::Tensor predict_depth(nets::DepthNetwork& depth, const torch::Tensor& image, double min_depth,
                            double max_depth) {
  return nets::disparity_to_depth(depth->forward(image).front(), min_depth, max_depth);
}

torch::Tensor flip_target(const torch::Tensor& depth, AttackKind kind) {
  if (kind == AttackKind::kHflip) return depth.flip({3});
  if (kind == AttackKind::kVflip) return depth.flip({2});
  throw ConfigError("attack", "flip target needs hflip or vflip");
}

double rmse(const torch::Tensor& a, const torch::Tensor& b) {
  return std::sqrt((a.to(torch::kFloat64) - b.to(torch::kFloat64)).pow(2).mean().item<double>());
}

torch::Tensor targeted_flip_attack(nets::DepthNetwork& depth, const torch::Tensor& image, const AttackSpec& spec,
                                   double min_depth, double max_depth) {
  if (spec.kind == AttackKind::kPgd) throw ConfigError("attack", "targeted attack needs hflip or vflip");
  spec.validate();
  const double eps = spec.epsilon / 255.0;
  const double step = spec.step_size / 255.0;
  const auto iters = spec.iterations();
  if (iters == 0 || eps == 0.0) return image;

  EvalScope scope({depth.ptr().get()});
  torch::Tensor target;
  {
    torch::NoGradGuard guard;
    target = flip_target(predict_depth(depth, image, min_depth, max_depth), spec.kind);
  }
  auto adv = image.detach().clone();
  for (int64_t i = 0; i < iters; ++i) {
    adv.requires_grad_(true);
    auto pred = predict_depth(depth, adv, min_depth, max_depth);
    auto loss = torch::sqrt((pred - target).pow(2).mean());
    auto grad = torch::autograd::grad({loss}, {adv}, {}, false, false, true)[0];
    torch::NoGradGuard guard;
    if (!grad.defined()) grad = torch::zeros_like(adv);
    adv = project(adv - step * grad.sign(), image, eps).detach();
  }
  return adv;
}

}  // namespace monosfm::robust
