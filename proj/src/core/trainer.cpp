#include "trainer.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "checkpoint.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace monosfm::train {

namespace fs = std::filesystem;

void Models::train(bool on) {
  depth->train(on);
  pose->train(on);
}

std::vector<torch::Tensor> Models::parameters() const {
  auto p = depth->parameters();
  for (auto& t : pose->parameters()) p.push_back(t);
  return p;
}

Models build_models(const config::RunConfig& cfg) {
  torch::manual_seed(cfg.train.seed);
  Models m;
  m.depth = nets::DepthNetwork(cfg.depth);
  m.pose = nets::PoseNetwork(cfg.pose);
  return m;
}

BatchOutputs compute_batch_loss(Models& models, const data::Batch& inputs, const data::Batch& targets,
                                const config::RunConfig& cfg, torch::Generator generator) {
  if (!inputs.prev.defined() && !inputs.next.defined()) {
    throw ShapeError("a training batch needs at least one source frame");
  }
  BatchOutputs out;
  out.disparities = models.depth->forward(inputs.center);

  std::vector<nets::PosePrediction> preds;
  std::vector<loss::SourceView> sources;
  if (inputs.prev.defined()) {
    // The pair is ordered in time; its inverse maps the centre view into the previous frame.
    auto p = models.pose->forward(inputs.prev, inputs.center);
    out.to_prev = geometry::pose_to_matrix(p.pose, true);
    sources.push_back({targets.prev, out.to_prev});
    preds.push_back(std::move(p));
  }
  if (inputs.next.defined()) {
    auto p = models.pose->forward(inputs.center, inputs.next);
    out.to_next = geometry::pose_to_matrix(p.pose, false);
    sources.push_back({targets.next, out.to_next});
    preds.push_back(std::move(p));
  }

  if (cfg.learn_intrinsics()) {
    nets::IntrinsicsPrediction mean{torch::zeros_like(preds[0].intrinsics->fx), {}, {}, {}};
    mean.fy = torch::zeros_like(mean.fx);
    mean.cx = torch::zeros_like(mean.fx);
    mean.cy = torch::zeros_like(mean.fx);
    for (const auto& p : preds) {
      mean.fx = mean.fx + p.intrinsics->fx / static_cast<double>(preds.size());
      mean.fy = mean.fy + p.intrinsics->fy / static_cast<double>(preds.size());
      mean.cx = mean.cx + p.intrinsics->cx / static_cast<double>(preds.size());
      mean.cy = mean.cy + p.intrinsics->cy / static_cast<double>(preds.size());
    }
    out.k = mean.matrix();
    out.intrinsics = mean;
  } else {
    if (!targets.k.defined()) {
      throw ConfigError("train.intrinsics", "intrinsics=given but the batch carries no camera matrix");
    }
    out.k = targets.k.to(targets.center.dtype());
  }
  out.report = loss::total_loss(targets.center, sources, out.disparities, out.k, cfg.depth.min_depth,
                                cfg.depth.max_depth, cfg.loss, generator);
  return out;
}

data::Batch color_jitter(const data::Batch& b, std::mt19937_64& rng, double strength, double prob) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> factor(1.0 - strength, 1.0 + strength);
  const auto n = b.center.size(0);
  std::vector<std::array<double, 3>> f(n, {1.0, 1.0, 1.0});
  for (int64_t i = 0; i < n; ++i) {
    if (coin(rng) < prob) f[i] = {factor(rng), factor(rng), factor(rng)};
  }
  auto apply = [&](const torch::Tensor& x) -> torch::Tensor {
    if (!x.defined()) return x;
    std::vector<torch::Tensor> items;
    for (int64_t i = 0; i < n; ++i) {
      auto img = x[i] * f[i][0];
      const auto gray = (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]);
      img = (img - gray.mean()) * f[i][1] + gray.mean();
      const auto g = (0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]).unsqueeze(0);
      img = (img - g) * f[i][2] + g;
      items.push_back(img.clamp(0.0, 1.0));
    }
    return torch::stack(items);
  };
  data::Batch out = b;
  out.prev = apply(b.prev);
  out.center = apply(b.center);
  out.next = apply(b.next);
  return out;
}

double learning_rate_at(const config::RunConfig& cfg, int64_t epoch) {
  const double lr = cfg.learning_rate();
  return epoch >= cfg.train.decay_epoch ? lr * cfg.train.decay_factor : lr;
}

std::vector<size_t> epoch_order(uint64_t seed, int64_t epoch, size_t n) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + static_cast<uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},
                   {"epoch", r.epoch},
                   {"lr", r.lr},
                   {"loss", r.total},
                   {"photometric", r.photometric},
                   {"smoothness", r.smoothness},
                   {"mask_coverage", r.mask_coverage}};
  if (r.intrinsics) {
    j["fx"] = (*r.intrinsics)[0];
    j["fy"] = (*r.intrinsics)[1];
    j["cx"] = (*r.intrinsics)[2];
    j["cy"] = (*r.intrinsics)[3];
  }
  return j;
}

std::shared_ptr<const data::TripletSource> make_training_source(const config::RunConfig& cfg) {
  if (cfg.data.is_synthetic()) {
    std::vector<data::ImageTriplet> items;
    for (int64_t s = 0; s < cfg.data.synthetic_sequences; ++s) {
      auto opts = cfg.data.synthetic;
      opts.seed = cfg.data.synthetic.seed + static_cast<uint64_t>(s);
      auto seq = data::render_synthetic_sequence(opts);
      for (auto& t : data::synthetic_triplets(seq, "synthetic_" + std::to_string(s))) {
        if (!cfg.data.synthetic_intrinsics) t.k.reset();
        items.push_back(std::move(t));
      }
    }
    return std::make_shared<data::InMemoryTriplets>(std::move(items));
  }
  data::LoadOptions opts;
  opts.height = cfg.data.height;
  opts.width = cfg.data.width;
  std::optional<fs::path> split;
  if (!cfg.data.split.empty()) split = cfg.data.split;
  return std::make_shared<data::TripletDataset>(
      data::load_dataset(cfg.data.root, data::dataset_format_from_string(cfg.data.format), split, opts));
}

Trainer::Trainer(config::RunConfig cfg, std::shared_ptr<const data::TripletSource> data, fs::path run_dir)
    : cfg_(std::move(cfg)), data_(std::move(data)), run_dir_(std::move(run_dir)), aug_rng_(cfg_.train.seed) {
  cfg_.validate();
  if (!data_) throw DataError("no training data");
  if (!cfg_.learn_intrinsics() && !data_->empty() && !data_->get(0).k) {
    throw ConfigError("train.intrinsics", "intrinsics=given but the dataset provides no camera calibration");
  }
  models_ = build_models(cfg_);
  const double lr = learning_rate_at(cfg_, 0);
  if (cfg_.optimizer() == config::OptimizerKind::kAdam) {
    optimizer_ = std::make_unique<torch::optim::Adam>(
        models_.parameters(),
        torch::optim::AdamOptions(lr).betas({cfg_.train.beta1, cfg_.train.beta2}));
  } else {
    optimizer_ = std::make_unique<torch::optim::AdamW>(
        models_.parameters(), torch::optim::AdamWOptions(lr)
                                  .betas({cfg_.train.beta1, cfg_.train.beta2})
                                  .weight_decay(cfg_.train.weight_decay));
  }
  generator_ = at::make_generator<at::CPUGeneratorImpl>(cfg_.train.seed);
  if (!run_dir_.empty()) fs::create_directories(run_dir_ / "checkpoints");
}

void Trainer::set_lr(double lr) {
  for (auto& group : optimizer_->param_groups()) group.options().set_lr(lr);
}

StepRecord Trainer::step(const data::Batch& batch) {
  models_.train(true);
  data::Batch targets = batch;
  if (cfg_.train.flip && std::uniform_real_distribution<double>(0.0, 1.0)(aug_rng_) < 0.5) {
    targets = data::flip_horizontal(batch);
  }
  data::Batch inputs = cfg_.train.color_jitter ? color_jitter(targets, aug_rng_) : targets;

  auto out = compute_batch_loss(models_, inputs, targets, cfg_, generator_);
  optimizer_->zero_grad();
  out.report.total.backward();
  optimizer_->step();
  ++state_.step;

  StepRecord r;
  r.step = state_.step;
  r.epoch = state_.epoch;
  r.lr = optimizer_->param_groups().front().options().get_lr();
  r.total = out.report.total.item<double>();
  r.photometric = out.report.photometric;
  r.smoothness = out.report.smoothness;
  r.mask_coverage = out.report.mask_coverage;
  if (out.intrinsics) {
    r.intrinsics = std::array<double, 4>{out.intrinsics->fx.mean().item<double>(),
                                         out.intrinsics->fy.mean().item<double>(),
                                         out.intrinsics->cx.mean().item<double>(),
                                         out.intrinsics->cy.mean().item<double>()};
  }
  return r;
}

void Trainer::log(const StepRecord& r) {
  if (run_dir_.empty() || r.step % cfg_.train.log_every != 0) return;
  std::ofstream(run_dir_ / "metrics.jsonl", std::ios::app) << to_json(r).dump() << '\n';
}

void Trainer::save(const fs::path& path) const {
  save_checkpoint(path, cfg_, models_, optimizer_.get(), state_);
}

fs::path Trainer::latest_checkpoint() const {
  fs::path best;
  if (run_dir_.empty() || !fs::exists(run_dir_ / "checkpoints")) return best;
  for (const auto& e : fs::directory_iterator(run_dir_ / "checkpoints")) {
    const auto name = e.path().filename().string();
    if (name.rfind("step_", 0) == 0 && e.path().extension() == ".pt" && (best.empty() || e.path() > best)) {
      best = e.path();
    }
  }
  return best;
}

void Trainer::resume(const fs::path& checkpoint) {
  state_ = load_checkpoint_into(checkpoint, cfg_, models_, optimizer_.get());
}

TrainState Trainer::run(const std::function<bool(const StepRecord&)>& on_step) {
  const auto n = data_->size();
  if (n == 0) return state_;
  const auto bs = static_cast<size_t>(cfg_.train.batch_size);
  const auto batches = static_cast<int64_t>((n + bs - 1) / bs);
  auto checkpoint_path = [&] {
    std::ostringstream name;
    name << "step_" << std::setw(8) << std::setfill('0') << state_.step << ".pt";
    return run_dir_ / "checkpoints" / name.str();
  };
  auto done = [&] { return cfg_.train.max_steps > 0 && state_.step >= cfg_.train.max_steps; };

  while (state_.epoch < cfg_.train.epochs && !done()) {
    set_lr(learning_rate_at(cfg_, state_.epoch));
    const auto order = epoch_order(cfg_.train.seed, state_.epoch, n);
    while (state_.batch_in_epoch < batches && !done()) {
      std::vector<data::ImageTriplet> items;
      const auto begin = static_cast<size_t>(state_.batch_in_epoch) * bs;
      for (size_t i = begin; i < std::min(n, begin + bs); ++i) items.push_back(data_->get(order[i]));
      StepRecord rec;
      try {
        rec = step(data::collate(items));
      } catch (const TrainingError& e) {
        // Parameters are untouched when the loss check fails before backward.
        std::string where;
        if (!run_dir_.empty()) {
          const auto path = run_dir_ / "checkpoints" / "abort_last_good.pt";
          save(path);
          where = " (last good weights saved to " + path.string() + ")";
        }
        throw TrainingError(std::string(e.what()) + " at step " + std::to_string(state_.step + 1) + where);
      }
      ++state_.batch_in_epoch;
      log(rec);
      if (!run_dir_.empty() && cfg_.train.checkpoint_every > 0 && state_.step % cfg_.train.checkpoint_every == 0) {
        save(checkpoint_path());
      }
      if (on_step && !on_step(rec)) return state_;
    }
    if (state_.batch_in_epoch < batches) break;
    ++state_.epoch;
    state_.batch_in_epoch = 0;
    if (!run_dir_.empty()) save(checkpoint_path());
  }
  if (!run_dir_.empty()) save(checkpoint_path());
  return state_;
}

}  // namespace monosfm::train
