#include "evaluation.hpp"

#include <iostream>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace monosfm::eval {

namespace F = torch::nn::functional;
using geometry::RigidTransform;

double median(const torch::Tensor& values) {
  auto v = std::get<0>(values.flatten().to(torch::kFloat64).sort());
  const auto n = v.numel();
  if (n == 0) throw DomainError("median of an empty set");
  if (n % 2 == 1) return v[n / 2].item<double>();
  return 0.5 * (v[n / 2 - 1].item<double>() + v[n / 2].item<double>());
}

std::optional<FrameResult> evaluate_frame(const torch::Tensor& pred, const torch::Tensor& gt,
                                          const DepthEvalOptions& opts) {
  auto p = pred.to(torch::kFloat64).squeeze();
  auto g = gt.to(torch::kFloat64).squeeze();
  if (p.sizes() != g.sizes()) throw ShapeError("prediction and ground truth differ in size");
  const auto mask = (g > opts.min_depth) & (g < opts.max_depth);
  if (!mask.any().item<bool>()) return std::nullopt;
  FrameResult r;
  if (opts.median_scaling) {
    const double mp = eval::median(p.masked_select(mask));
    const double mg = eval::median(g.masked_select(mask));
    if (!(mp > 0.0)) throw DomainError("predicted depth has a non-positive median");
    // Dividing before multiplying keeps c*pred and pred bit-identical after scaling.
    p = p / mp * mg;
    r.ratio = mg / mp;
  }
  p = p.clamp(opts.min_depth, opts.max_depth);
  r.metrics = metrics::depth_metrics(p, g, mask);
  return r;
}

DepthEvaluation evaluate_depth(const std::vector<torch::Tensor>& preds, const std::vector<torch::Tensor>& gts,
                               const DepthEvalOptions& opts) {
  if (preds.size() != gts.size()) throw ShapeError("need one ground-truth map per prediction");
  DepthEvaluation e;
  for (size_t i = 0; i < preds.size(); ++i) {
    auto r = evaluate_frame(preds[i], gts[i], opts);
    if (!r) {
      std::cerr << "warning: frame " << i << " has no valid ground truth; skipped\n";
      ++e.skipped;
      continue;
    }
    e.per_frame.push_back(r->metrics);
    e.ratios.push_back(r->ratio);
  }
  e.mean = metrics::mean_metrics(e.per_frame);
  return e;
}

torch::Tensor predict_depth_at(nets::DepthNetwork& depth, const torch::Tensor& image, int64_t height,
                               int64_t width, double min_depth, double max_depth) {
  auto disp = depth->forward(image).front();
  if (disp.size(2) != height || disp.size(3) != width) {
    disp = F::interpolate(disp, F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  }
  return nets::disparity_to_depth(disp, min_depth, max_depth);
}

DepthEvalOptions depth_eval_options(const config::RunConfig& cfg) {
  return {cfg.eval.min_depth, cfg.eval_cap(), cfg.eval.median_scaling};
}

std::shared_ptr<const data::TripletSource> make_eval_source(const config::RunConfig& cfg) {
  if (cfg.data.is_synthetic()) {
    std::vector<data::ImageTriplet> items;
    for (int64_t s = 0; s < cfg.data.synthetic_sequences; ++s) {
      auto opts = cfg.data.synthetic;
      opts.seed = cfg.data.synthetic.seed + 1000 + static_cast<uint64_t>(s);
      auto seq = data::render_synthetic_sequence(opts);
      for (auto& t : data::synthetic_triplets(seq, "synthetic_eval_" + std::to_string(s))) {
        if (!cfg.data.synthetic_intrinsics) t.k.reset();
        items.push_back(std::move(t));
      }
    }
    return std::make_shared<data::InMemoryTriplets>(std::move(items));
  }
  data::LoadOptions opts;
  opts.height = cfg.data.height;
  opts.width = cfg.data.width;
  opts.require_neighbors = false;
  opts.load_depth = true;
  std::optional<std::filesystem::path> split;
  if (!cfg.eval.split.empty()) split = cfg.eval.split;
  return std::make_shared<data::TripletDataset>(
      data::load_dataset(cfg.data.root, data::dataset_format_from_string(cfg.data.format), split, opts));
}

namespace {

RigidTransform to_rigid(const torch::Tensor& m44) { return RigidTransform::from_matrix(m44.to(torch::kFloat64)); }

}  // namespace

EvalReport evaluate_model(train::Models& models, const config::RunConfig& cfg, const data::TripletSource& data,
                          const EvalRequest& request) {
  models.train(false);
  EvalReport report;
  if (request.corruption) report.corruption = robust::to_string(request.corruption->kind) + ":" +
                                              std::to_string(request.corruption->severity);
  if (request.attack) {
    std::ostringstream a;
    a << robust::to_string(request.attack->kind) << ":" << request.attack->epsilon;
    report.attack = a.str();
  }
  const auto opts = depth_eval_options(cfg);
  const double dmin = cfg.depth.min_depth;
  const double dmax = cfg.depth.max_depth;

  std::vector<torch::Tensor> preds, gts;
  double rmse_clean = 0.0, rmse_adv = 0.0;
  size_t targeted = 0;
  // Per sequence: frame -> (gt camera-to-world, predicted relative transform to the next frame).
  std::map<std::string, std::map<int64_t, std::pair<std::optional<RigidTransform>, std::optional<RigidTransform>>>>
      tracks;
  std::vector<torch::Tensor> k_preds;
  std::optional<geometry::Intrinsics> gt_k;

  const size_t n = request.max_frames > 0 ? std::min(request.max_frames, data.size()) : data.size();
  for (size_t i = 0; i < n; ++i) {
    const auto triplet = data.get(i);
    auto batch = data::collate({triplet}, true);
    if (request.corruption) {
      auto spec = *request.corruption;
      spec.seed = request.seed + i * 3;
      batch.center = robust::corrupt(batch.center, spec);
      spec.seed += 1;
      if (batch.prev.defined()) batch.prev = robust::corrupt(batch.prev, spec);
      spec.seed += 1;
      if (batch.next.defined()) batch.next = robust::corrupt(batch.next, spec);
    }
    if (request.attack) {
      if (request.attack->kind == robust::AttackKind::kPgd) {
        batch = robust::pgd_untargeted(models, batch, cfg, *request.attack, request.seed + i);
      } else {
        auto adv = robust::targeted_flip_attack(models.depth, batch.center, *request.attack, dmin, dmax);
        torch::NoGradGuard guard;
        const auto clean_pred = robust::predict_depth(models.depth, batch.center, dmin, dmax);
        const auto target = robust::flip_target(clean_pred, request.attack->kind);
        rmse_clean += robust::rmse(clean_pred, target);
        rmse_adv += robust::rmse(robust::predict_depth(models.depth, adv, dmin, dmax), target);
        ++targeted;
        batch.center = adv;
      }
    }

    torch::NoGradGuard guard;
    if (triplet.gt_depth.defined()) {
      const auto h = triplet.gt_depth.size(-2);
      const auto w = triplet.gt_depth.size(-1);
      preds.push_back(predict_depth_at(models.depth, batch.center, h, w, dmin, dmax)[0][0]);
      gts.push_back(triplet.gt_depth.squeeze(0));
    }
    if (batch.next.defined()) {
      auto p = models.pose->forward(batch.center, batch.next);
      auto& slot = tracks[triplet.sequence][triplet.frame];
      slot.second = to_rigid(geometry::pose_to_matrix(p.pose, false)[0]);
      if (p.intrinsics) k_preds.push_back(p.intrinsics->matrix()[0].to(torch::kFloat64));
    }
    if (triplet.gt_pose) tracks[triplet.sequence][triplet.frame].first = triplet.gt_pose;
    if (triplet.k && !gt_k) gt_k = triplet.k;
  }
  if (!gts.empty()) report.depth = evaluate_depth(preds, gts, opts);
  report.frames = n;
  if (targeted > 0) {
    report.target_rmse_clean = rmse_clean / static_cast<double>(targeted);
    report.target_rmse_adv = rmse_adv / static_cast<double>(targeted);
  }

  // Odometry over contiguous runs with ground truth at every frame.
  metrics::OdometryOptions odo;
  odo.lengths = cfg.eval.odometry_lengths;
  odo.align_scale = cfg.eval.align_scale;
  double t_sum = 0.0, r_sum = 0.0;
  size_t segments = 0;
  for (const auto& [seq, frames] : tracks) {
    std::vector<RigidTransform> gt, rel;
    std::optional<int64_t> prev_frame;
    auto flush = [&] {
      if (gt.size() >= 2) {
        auto pred = metrics::accumulate_relative(rel);
        pred.resize(gt.size());
        if (auto m = metrics::odometry_metrics(pred, gt, odo)) {
          t_sum += m->t_err * static_cast<double>(m->segments);
          r_sum += m->r_err * static_cast<double>(m->segments);
          segments += m->segments;
        }
      }
      gt.clear();
      rel.clear();
    };
    for (const auto& [frame, entry] : frames) {
      if (!entry.first || (prev_frame && frame != *prev_frame + 1)) flush();
      if (!entry.first) {
        prev_frame.reset();
        continue;
      }
      gt.push_back(*entry.first);
      prev_frame = frame;
      if (!entry.second) {
        flush();
        prev_frame.reset();
        continue;
      }
      rel.push_back(*entry.second);
    }
    flush();
  }
  if (segments > 0) {
    report.odometry = metrics::OdometryMetrics{t_sum / segments, r_sum / segments, segments};
  }

  if (!k_preds.empty()) {
    const auto k = torch::stack(k_preds).mean(0);
    geometry::Intrinsics pk{k[0][0].item<double>(), k[1][1].item<double>(), k[0][2].item<double>(),
                            k[1][2].item<double>(), cfg.data.width, cfg.data.height};
    report.predicted_k = pk;
    if (gt_k) report.intrinsics_error = metrics::intrinsics_error(pk, *gt_k);
  }
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  nlohmann::json d;
  const auto& cols = metrics::depth_metric_columns();
  const auto vals = depth.mean.values();
  for (size_t i = 0; i < cols.size(); ++i) d[cols[i]] = vals[i];
  d["frames"] = depth.per_frame.size();
  d["skipped"] = depth.skipped;
  j["depth"] = d;
  j["frames"] = frames;
  if (odometry) j["odometry"] = {{"t_err", odometry->t_err}, {"r_err", odometry->r_err}, {"segments", odometry->segments}};
  if (predicted_k) {
    j["predicted_intrinsics"] = {{"fx", predicted_k->fx}, {"fy", predicted_k->fy}, {"cx", predicted_k->cx},
                                 {"cy", predicted_k->cy}};
  }
  if (intrinsics_error) {
    j["intrinsics_error"] = {{"fx", intrinsics_error->fx}, {"fy", intrinsics_error->fy},
                             {"cx", intrinsics_error->cx}, {"cy", intrinsics_error->cy}};
  }
  if (target_rmse_clean) j["target_rmse_clean"] = *target_rmse_clean;
  if (target_rmse_adv) j["target_rmse_adv"] = *target_rmse_adv;
  if (!corruption.empty()) j["corruption"] = corruption;
  if (!attack.empty()) j["attack"] = attack;
  return j;
}

std::string EvalReport::table(const std::string& label) const {
  std::ostringstream s;
  s << metrics::format_depth_table({{label, depth.mean}});
  if (odometry) {
    s << "odometry: t_err " << odometry->t_err << " %  r_err " << odometry->r_err << " deg/100m  ("
      << odometry->segments << " segments)\n";
  }
  if (intrinsics_error) {
    s << "intrinsics error %: fx " << intrinsics_error->fx << "  fy " << intrinsics_error->fy << "  cx "
      << intrinsics_error->cx << "  cy " << intrinsics_error->cy << '\n';
  }
  if (target_rmse_clean) {
    s << "rmse to flipped target: clean " << *target_rmse_clean << "  attacked " << *target_rmse_adv << '\n';
  }
  return s.str();
}

}  // namespace monosfm::eval
