// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <optional>
#include <algorithm>
#include <vector>

#include "attacks.hpp"
#include "config.hpp"
#include "corruptions.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "trainer.hpp"

using namespace monosfm;
using geometry::RigidTransform;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
  return (a.to(torch::kFloat64) - b.to(torch::kFloat64)).abs().max().item<double>();
}

torch::Tensor k_batch(const geometry::Intrinsics& k, torch::Dtype dtype) {
  return geometry::intrinsics_to_matrix(k).to(dtype).unsqueeze(0);
}

bool grad_close(double an, double fd, double rel) {
  return std::abs(an - fd) <= rel * std::max(std::abs(an), std::abs(fd)) + 1e-9;
}

// --- 1 ---------------------------------------------------------------------

void geometry_oracle(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(0);
  const int64_t h = 24, w = 40;
  auto src = torch::rand({2, 3, h, w}, torch::kFloat64);
  auto depth = torch::rand({2, 1, h, w}, torch::kFloat64) * 20 + 0.5;
  const auto k = k_batch({30, 30, 19.5, 11.5, w, h}, torch::kFloat64).expand({2, 3, 3});
  const auto id = geometry::synthesize_view(src, depth, torch::eye(4, torch::kFloat64).expand({2, 4, 4}), k);
  const double id_err = max_abs(id.image, src);
  o.require(id_err < 1e-6, "identity warp");

  auto t = torch::eye(4, torch::kFloat64).unsqueeze(0);
  t[0][0][3] = 0.1;
  const auto one = geometry::synthesize_view(torch::rand({1, 3, 5, 5}, torch::kFloat64),
                                             torch::ones({1, 1, 5, 5}, torch::kFloat64), t,
                                             k_batch({1, 1, 0, 0, 5, 5}, torch::kFloat64));
  double px_err = 0;
  for (int v = 0; v < 5; ++v) {
    for (int u = 0; u < 5; ++u) {
      px_err = std::max(px_err, std::abs(one.sample_px[0][v][u][0].item<double>() - (u + 0.1)));
      px_err = std::max(px_err, std::abs(one.sample_px[0][v][u][1].item<double>() - v));
    }
  }
  o.require(px_err < 1e-6, "single-pixel case");
  const double secs = seconds_since(t0);
  o.require(secs < 1.0, "runtime");
  o.detail << "identity_max_diff=" << id_err << " pixel_err=" << px_err << " time=" << secs << "s";
}

// --- 2 ---------------------------------------------------------------------

void gradient_checks(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(1);
  std::mt19937_64 rng(1);
  const int64_t h = 12, w = 20;
  const auto k = k_batch({16, 16, 9.5, 5.5, w, h}, torch::kFloat64);
  const double eps = 1e-6;
  std::uniform_int_distribution<int> rv(1, h - 2), ru(1, w - 2);

  auto src = torch::rand({1, 3, h, w}, torch::kFloat64);
  auto depth = (torch::rand({1, 1, h, w}, torch::kFloat64) * 3 + 4).requires_grad_(true);
  auto tr = geometry::pose_to_matrix(torch::tensor({{0.02, -0.03, 0.01, 0.3, -0.1, 0.2}}, torch::kFloat64), false);
  auto warp = [&](const torch::Tensor& d) { return geometry::synthesize_view(src, d, tr, k).image.sum(); };
  const auto g1 = torch::autograd::grad({warp(depth)}, {depth})[0];

  auto target = torch::rand({1, 3, h, w}, torch::kFloat64);
  std::vector<loss::SourceView> views{{torch::rand({1, 3, h, w}, torch::kFloat64), tr}};
  loss::LossOptions opts;
  opts.automask = false;
  opts.identity_noise = 0.0;
  auto disp = (torch::rand({1, 1, h, w}, torch::kFloat64) * 0.5 + 0.25).requires_grad_(true);
  auto objective = [&](const torch::Tensor& d) {
    return loss::total_loss(target, views, {d}, k, 0.1, 100.0, opts).total;
  };
  const auto g2 = torch::autograd::grad({objective(disp)}, {disp})[0];

  int ok_warp = 0, ok_loss = 0;
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const int v = rv(rng), u = ru(rng);
    for (int which = 0; which < 2; ++which) {
      const auto& x = which == 0 ? depth : disp;
      auto xp = x.detach().clone();
      auto xm = x.detach().clone();
      xp[0][0][v][u] += eps;
      xm[0][0][v][u] -= eps;
      const double fd = which == 0 ? (warp(xp).item<double>() - warp(xm).item<double>()) / (2 * eps)
                                   : (objective(xp).item<double>() - objective(xm).item<double>()) / (2 * eps);
      const double an = (which == 0 ? g1 : g2)[0][0][v][u].item<double>();
      const bool ok = grad_close(an, fd, 1e-3);
      (which == 0 ? ok_warp : ok_loss) += ok;
      if (std::max(std::abs(an), std::abs(fd)) > 0) {
        worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(an), std::abs(fd)));
      }
    }
  }
  o.require(ok_warp == 10, "synthesize_view gradient");
  o.require(ok_loss == 10, "total_loss gradient");
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime");
  o.detail << "warp=" << ok_warp << "/10 loss=" << ok_loss << "/10 worst_rel=" << worst << " time=" << secs << "s";
}

// --- 3 ---------------------------------------------------------------------

std::string shape_str(const torch::Tensor& t) {
  std::ostringstream s;
  for (int64_t i = 1; i < t.dim(); ++i) s << (i > 1 ? "x" : "") << t.size(i);
  return s.str();
}

void check_architecture(Outcome& o, const std::string& family, const std::vector<std::string>& depth_expected,
                        const std::string& pose_expected) {
  torch::NoGradGuard guard;
  torch::manual_seed(0);
  const auto cfg = config::from_json({{"model", {{"encoder", {{"family", family}}}}}});
  auto models = train::build_models(cfg);
  models.train(false);
  const auto out = models.depth->forward_full(torch::rand({1, 3, 192, 640}));
  std::vector<std::string> got;
  for (const auto& r : out.reassembled) got.push_back(shape_str(r));
  for (size_t i = 0; i < depth_expected.size(); ++i) {
    if (depth_expected[i].empty()) continue;
    o.require(i < got.size() && got[i] == depth_expected[i], family + " DN" + std::to_string(i + 1));
  }
  bool scales_ok = out.disparities.size() == 4;
  for (size_t s = 0; scales_ok && s < 4; ++s) {
    const auto& d = out.disparities[s];
    scales_ok = d.size(2) == (192 >> s) && d.size(3) == (640 >> s) && d.min().item<double>() > 0.0 &&
                d.max().item<double>() < 1.0;
  }
  o.require(scales_ok, family + " disparity pyramid");
  const auto pn = shape_str(models.pose->encode(torch::rand({1, 6, 192, 640})));
  o.require(pn == pose_expected, family + " PN4");
  o.detail << family << ": DN=";
  for (const auto& g : got) o.detail << g << ",";
  o.detail << " PN4=" << pn << "; ";
}

void architecture_contract(Outcome& o) {
  check_architecture(o, "deit", {"96x48x160", "768x24x80", "1536x12x40", "3072x6x20"}, "2048x12x40");
  check_architecture(o, "pvt", {"", "", "", "512x6x20"}, "512x6x20");
}

// --- 4 ---------------------------------------------------------------------

void loss_properties(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  torch::manual_seed(2);
  auto x = torch::rand({2, 3, 32, 48});
  const double ssim_err = (loss::ssim(x, x) - 1).abs().max().item<double>();
  o.require(ssim_err < 1e-6, "ssim(x,x)");

  const int64_t h = 32, w = 48;
  auto target = torch::rand({1, 3, h, w});
  std::vector<loss::SourceView> statics{{target.clone(), torch::eye(4).unsqueeze(0)},
                                        {target.clone(), torch::eye(4).unsqueeze(0)}};
  std::vector<torch::Tensor> disps;
  for (int s = 0; s < 4; ++s) disps.push_back(torch::full({1, 1, h >> s, w >> s}, 0.3));
  const auto r = loss::total_loss(target, statics, disps, k_batch({28, 28, 23.5, 15.5, w, h}, torch::kFloat32),
                                  0.1, 100.0);
  o.require(r.mask_coverage < 1e-6, "static-triplet auto-mask");

  const double smooth = loss::smoothness(torch::full({1, 1, h, w}, 0.42), target).item<double>();
  o.require(std::abs(smooth) < 1e-6, "constant-disparity smoothness");
  const double secs = seconds_since(t0);
  o.require(secs < 10.0, "runtime");
  o.detail << "ssim_err=" << ssim_err << " kept_fraction=" << r.mask_coverage << " smoothness=" << smooth
           << " time=" << secs << "s";
}

// --- 5, 6, 7 ---------------------------------------------------------------

double spearman(const torch::Tensor& a, const torch::Tensor& b) {
  auto rank = [](const torch::Tensor& v) { return v.argsort().argsort().to(torch::kFloat64); };
  const auto ra = rank(a), rb = rank(b);
  const auto da = ra - ra.mean(), db = rb - rb.mean();
  return ((da * db).sum() / (da.norm() * db.norm())).item<double>();
}

double grad_norm(const std::vector<torch::Tensor>& params) {
  double s = 0;
  for (const auto& p : params) {
    if (p.grad().defined()) s += p.grad().pow(2).sum().item<double>();
  }
  return std::sqrt(s);
}

struct ToyRun {
  config::RunConfig cfg;
  train::Models models;
  std::shared_ptr<const data::TripletSource> train_data;
  std::vector<double> losses;
  bool focal_always_positive = true;
  double train_seconds = 0;
};

ToyRun train_toy() {
  ToyRun run;
  run.cfg = config::load_config(MONOSFM_TINY_CONFIG);
  run.train_data = train::make_training_source(run.cfg);
  const auto t0 = std::chrono::steady_clock::now();
  train::Trainer trainer(run.cfg, run.train_data);
  trainer.run([&](const train::StepRecord& r) {
    run.losses.push_back(r.total);
    if (r.intrinsics && !((*r.intrinsics)[0] > 0 && (*r.intrinsics)[1] > 0)) run.focal_always_positive = false;
    return true;
  });
  run.train_seconds = seconds_since(t0);
  run.models = trainer.models();
  return run;
}

void overfit(Outcome& o, ToyRun& run) {
  o.require(run.cfg.train.max_steps == 200, "200 training steps configured");
  o.require(run.train_data->size() == 50, "50 training triplets");
  o.require(run.losses.size() == 200, "200 steps ran");
  const auto n = run.losses.size();
  double first = 0, last = 0;
  for (size_t i = 0; i < 10 && i < n; ++i) {
    first += run.losses[i] / 10;
    last += run.losses[n - 1 - i] / 10;
  }
  const double ratio = last / first;
  o.require(ratio < 0.5, "loss ratio");

  torch::NoGradGuard guard;
  run.models.train(false);
  const auto eval_data = eval::make_eval_source(run.cfg);
  double rho = 0;
  size_t frames = 0;
  for (size_t i = 0; i < eval_data->size(); ++i) {
    const auto t = eval_data->get(i);
    const auto disp = run.models.depth->forward(t.center.unsqueeze(0))[0][0];
    const auto mask = t.gt_depth > 0;
    if (!mask.any().item<bool>()) continue;
    rho += spearman(disp.masked_select(mask), 1.0 / t.gt_depth.masked_select(mask));
    ++frames;
  }
  rho /= std::max<size_t>(frames, 1);
  o.require(rho > 0.5, "spearman");
  o.require(run.train_seconds < 600.0, "runtime");
  o.detail << "loss_first10=" << first << " loss_last10=" << last << " ratio=" << ratio << " spearman=" << rho
           << " (" << frames << " held-out frames) train_time=" << run.train_seconds << "s";
}

void intrinsics_head(Outcome& o, ToyRun& run) {
  o.require(run.cfg.learn_intrinsics(), "intrinsics=learned");
  o.require(run.focal_always_positive, "fx, fy > 0 at every step");

  run.models.train(true);
  const auto batch = data::collate({run.train_data->get(0), run.train_data->get(1)});
  for (auto& p : run.models.parameters()) p.mutable_grad() = torch::Tensor();
  auto out = train::compute_batch_loss(run.models, batch, batch, run.cfg);
  out.report.total.backward();
  std::vector<torch::Tensor> focal, principal;
  for (const auto& p : run.models.pose->named_parameters()) {
    if (p.key().find("intrinsics.focal") != std::string::npos) focal.push_back(p.value());
    if (p.key().find("intrinsics.principal") != std::string::npos) principal.push_back(p.value());
  }
  const double gf = grad_norm(focal), gp = grad_norm(principal);
  o.require(gf > 0 && gp > 0, "gradient reaches both branches");
  run.models.train(false);

  const auto eval_data = eval::make_eval_source(run.cfg);
  const auto report = eval::evaluate_model(run.models, run.cfg, *eval_data, {});
  o.require(report.predicted_k && report.intrinsics_error, "intrinsics evaluated");
  if (report.predicted_k && report.intrinsics_error) {
    o.require(report.predicted_k->fx > 0 && report.predicted_k->fy > 0, "evaluated fx, fy > 0");
    o.detail << "fx=" << report.predicted_k->fx << " fy=" << report.predicted_k->fy
             << " fx_err=" << report.intrinsics_error->fx << "% fy_err=" << report.intrinsics_error->fy
             << "% (reported, no tolerance)";
  }
  o.detail << " grad_focal=" << gf << " grad_principal=" << gp;
}

void attack_engine(Outcome& o, ToyRun& run) {
  for (double e : robust::untargeted_epsilons()) {
    o.require(robust::pgd_iterations(e) == static_cast<int64_t>(std::min(e + 4.0, std::ceil(1.25 * e))),
              "iterations at eps " + std::to_string(e));
  }
  for (double e : robust::targeted_epsilons()) {
    o.require(robust::pgd_iterations(e) == static_cast<int64_t>(std::min(e + 4.0, std::ceil(1.25 * e))),
              "iterations at eps " + std::to_string(e));
  }
  o.require(robust::pgd_iterations(2) == 3 && robust::pgd_iterations(16) == 20, "eps 2 -> 3, eps 16 -> 20");

  run.models.train(false);
  const auto batch = data::collate({run.train_data->get(3), run.train_data->get(4)});
  double worst = 0;
  for (double e : robust::untargeted_epsilons()) {
    const auto adv = robust::pgd_untargeted(run.models, batch, run.cfg, {robust::AttackKind::kPgd, e, 1.0});
    for (auto [a, c] : {std::pair{adv.prev, batch.prev}, {adv.center, batch.center}, {adv.next, batch.next}}) {
      const double d = max_abs(a, c);
      worst = std::max(worst, d * 255.0 / e);
      o.require(d <= e / 255.0 + 1e-6, "pgd ball at eps " + std::to_string(e));
    }
  }
  for (auto kind : {robust::AttackKind::kHflip, robust::AttackKind::kVflip}) {
    for (double e : robust::targeted_epsilons()) {
      const auto adv = robust::targeted_flip_attack(run.models.depth, batch.center, {kind, e, 1.0},
                                                    run.cfg.depth.min_depth, run.cfg.depth.max_depth);
      const double d = max_abs(adv, batch.center);
      worst = std::max(worst, d * 255.0 / e);
      o.require(d <= e / 255.0 + 1e-6, "targeted ball at eps " + std::to_string(e));
    }
  }
  const auto zero = robust::pgd_untargeted(run.models, batch, run.cfg, {robust::AttackKind::kPgd, 0.0, 1.0});
  o.require(torch::equal(zero.center, batch.center) && torch::equal(zero.prev, batch.prev), "eps 0 identity");

  const auto eval_data = eval::make_eval_source(run.cfg);
  const auto clean = eval::evaluate_model(run.models, run.cfg, *eval_data, {});
  eval::EvalRequest pgd;
  pgd.attack = robust::parse_attack_spec("pgd:4");
  const auto attacked = eval::evaluate_model(run.models, run.cfg, *eval_data, pgd);
  o.require(attacked.depth.mean.rmse > clean.depth.mean.rmse, "pgd raises rmse");
  eval::EvalRequest flip;
  flip.attack = robust::parse_attack_spec("hflip:4");
  const auto flipped = eval::evaluate_model(run.models, run.cfg, *eval_data, flip);
  const bool has_target = flipped.target_rmse_clean && flipped.target_rmse_adv;
  o.require(has_target && *flipped.target_rmse_adv < *flipped.target_rmse_clean, "targeted attack moves to target");
  o.detail << "max_linf/eps=" << worst << " rmse_clean=" << clean.depth.mean.rmse
           << " rmse_pgd4=" << attacked.depth.mean.rmse;
  if (has_target) {
    o.detail << " target_rmse_clean=" << *flipped.target_rmse_clean << " target_rmse_hflip4=" << *flipped.target_rmse_adv;
  }
}

// --- 8 ---------------------------------------------------------------------

void corruption_engine(Outcome& o) {
  torch::manual_seed(3);
  const auto img = torch::rand({3, 64, 96}) * 0.5 + 0.25;
  int runs = 0, deterministic = 0;
  for (auto kind : robust::all_corruption_kinds()) {
    for (int s = 1; s <= 5; ++s) {
      const auto a = robust::corrupt(img, {kind, s, 7});
      const auto b = robust::corrupt(img, {kind, s, 7});
      runs += a.sizes() == img.sizes() && torch::isfinite(a).all().item<bool>();
      deterministic += torch::equal(a, b);
    }
  }
  o.require(robust::all_corruption_kinds().size() == 15, "15 kinds");
  o.require(runs == 75, "75 runs");
  o.require(deterministic == 75, "determinism");
  const double sigma = robust::corruption_params(robust::CorruptionKind::kGaussianNoise, 5).at(0);
  const auto flat = torch::full({3, 192, 192}, 0.5);
  const auto noise = robust::corrupt(flat, {robust::CorruptionKind::kGaussianNoise, 5, 11}) - flat;
  const double est = noise.abs().flatten().median().item<double>() / 0.6744897501960817;
  o.require(std::abs(sigma - 0.38) < 1e-12, "table sigma");
  o.require(std::abs(est - sigma) <= 0.1 * sigma, "gaussian sigma");
  o.detail << "runs=" << runs << "/75 deterministic=" << deterministic << "/75 sigma_est=" << est << " ref=" << sigma;
}

// --- 9 ---------------------------------------------------------------------

RigidTransform yaw_pose(double yaw, double x, double z) {
  RigidTransform t;
  t.rotation = {std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw)};
  t.translation = {x, 0, z};
  return t;
}

metrics::OdometryMetrics odometry_oracle(const std::vector<RigidTransform>& pred,
                                         const std::vector<RigidTransform>& gt, const std::vector<double>& lengths) {
  const size_t n = gt.size();
  std::vector<torch::Tensor> P, G;
  for (size_t i = 0; i < n; ++i) {
    P.push_back(torch::linalg_inv(pred[0].matrix()).matmul(pred[i].matrix()));
    G.push_back(torch::linalg_inv(gt[0].matrix()).matmul(gt[i].matrix()));
  }
  auto pos = [](const torch::Tensor& m) { return m.narrow(0, 0, 3).select(1, 3); };
  double pn = 0, gn = 0;
  for (size_t i = 0; i < n; ++i) {
    pn += pos(P[i]).pow(2).sum().item<double>();
    gn += pos(G[i]).pow(2).sum().item<double>();
  }
  for (auto& m : P) pos(m).mul_(std::sqrt(gn / pn));
  std::vector<double> dist(n, 0.0);
  for (size_t i = 1; i < n; ++i) dist[i] = dist[i - 1] + (pos(G[i]) - pos(G[i - 1])).norm().item<double>();
  double ts = 0, rs = 0;
  size_t count = 0;
  for (size_t f = 0; f < n; ++f) {
    for (double len : lengths) {
      size_t l = f;
      while (l < n && dist[l] <= dist[f] + len) ++l;
      if (l == n) continue;
      const auto e = torch::linalg_inv(torch::linalg_inv(P[f]).matmul(P[l])).matmul(torch::linalg_inv(G[f]).matmul(G[l]));
      ts += pos(e).norm().item<double>() / len;
      const double c = (e.narrow(0, 0, 3).narrow(1, 0, 3).trace().item<double>() - 1) / 2;
      rs += std::acos(std::clamp(c, -1.0, 1.0)) / len;
      ++count;
    }
  }
  return {100 * ts / count, 100 * 180 / M_PI * rs / count, count};
}

void metric_oracles(Outcome& o) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> depth(0.5, 80.0), factor(0.3, 2.5), coin(0, 1);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const int64_t n = 50 + inst;
    auto gt = torch::empty({n}, torch::kFloat64), pred = torch::empty({n}, torch::kFloat64);
    auto mask = torch::zeros({n}, torch::kBool);
    double abs_rel = 0, sq_rel = 0, se = 0, sle = 0, a1 = 0, a2 = 0, a3 = 0, cnt = 0;
    for (int64_t i = 0; i < n; ++i) {
      const double g = depth(rng), p = g * factor(rng);
      gt[i] = g;
      pred[i] = p;
      if (coin(rng) < 0.2 && i > 0) continue;
      mask[i] = true;
      abs_rel += std::abs(p - g) / g;
      sq_rel += (p - g) * (p - g) / g;
      se += (p - g) * (p - g);
      sle += std::pow(std::log(p) - std::log(g), 2);
      const double r = std::max(p / g, g / p);
      a1 += r < 1.25;
      a2 += r < 1.5625;
      a3 += r < 1.953125;
      ++cnt;
    }
    const std::array<double, 7> ref{abs_rel / cnt, sq_rel / cnt, std::sqrt(se / cnt), std::sqrt(sle / cnt),
                                    a1 / cnt,      a2 / cnt,     a3 / cnt};
    const auto got = metrics::depth_metrics(pred, gt, mask).values();
    for (size_t i = 0; i < 7; ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
  }
  o.require(worst <= 1e-10, "depth metrics vs loop");

  std::vector<RigidTransform> gt, pred;
  std::normal_distribution<double> nd(0, 0.05);
  for (int i = 0; i < 10; ++i) {
    gt.push_back(yaw_pose(0.02 * i, 0.1 * i, i));
    pred.push_back(yaw_pose(0.02 * i + nd(rng), 0.1 * i + nd(rng), 0.7 * i + nd(rng)));
  }
  const std::vector<double> lengths{2, 4, 6};
  const auto odo = metrics::odometry_metrics(pred, gt, {lengths, true, 1});
  const auto ref = odometry_oracle(pred, gt, lengths);
  const bool odo_ok = odo && odo->segments == ref.segments && std::abs(odo->t_err - ref.t_err) < 1e-8 &&
                      std::abs(odo->r_err - ref.r_err) < 1e-8;
  o.require(odo_ok, "odometry vs brute force");

  std::vector<RigidTransform> straight, biased;
  const double bias = M_PI / 180.0 / 100.0;
  double x = 0, z = 0;
  for (int i = 0; i < 400; ++i) {
    straight.push_back(yaw_pose(0, 0, i));
    biased.push_back(yaw_pose(bias * i, x, z));
    x += std::sin(bias * i);
    z += std::cos(bias * i);
  }
  const auto yaw = metrics::odometry_metrics(biased, straight, {{100, 200, 300}, false, 1});
  o.require(yaw && std::abs(yaw->r_err - 1.0) <= 0.05, "yaw-bias r_err");
  o.detail << "depth_max_diff=" << worst;
  if (odo) o.detail << " odo t_err=" << odo->t_err << "/" << ref.t_err << " r_err=" << odo->r_err << "/" << ref.r_err;
  if (yaw) o.detail << " yaw_bias_r_err=" << yaw->r_err;
}

// --- 10 --------------------------------------------------------------------

void protocol_invariance(Outcome& o) {
  torch::manual_seed(5);
  std::vector<torch::Tensor> preds, gts;
  for (int i = 0; i < 8; ++i) {
    auto g = torch::rand({1, 24, 40}, torch::kFloat64) * 70 + 1;
    g.masked_fill_(torch::rand({1, 24, 40}) < 0.3, 0.0);
    gts.push_back(g);
    preds.push_back(torch::rand({1, 24, 40}, torch::kFloat64) * 20 + 0.5);
  }
  eval::DepthEvalOptions opts{1e-3, 80.0, true};
  const auto base = eval::evaluate_depth(preds, gts, opts).mean.values();
  double worst = 0;
  for (double c : {0.5, 1.0, 3.0}) {
    std::vector<torch::Tensor> scaled;
    for (const auto& p : preds) scaled.push_back(p * c);
    const auto m = eval::evaluate_depth(scaled, gts, opts).mean.values();
    for (size_t i = 0; i < 7; ++i) worst = std::max(worst, std::abs(m[i] - base[i]) / std::max(1.0, std::abs(base[i])));
  }
  o.require(worst < 1e-12, "median-scaling invariance");
  o.detail << "max_rel_diff=" << worst;
}

}  // namespace

int main() {
  torch::set_num_threads(std::max(1u, std::thread::hardware_concurrency()));
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<void(Outcome&)>& fn) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "[exception: " << e.what() << "]";
    }
    failures += !o.pass;
    std::printf("%s %d %s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "geometry-oracle", geometry_oracle);
  report(2, "gradient-checks", gradient_checks);
  report(3, "architecture-shapes", architecture_contract);
  report(4, "loss-properties", loss_properties);

  std::optional<ToyRun> toy;
  std::string toy_error;
  try {
    toy = train_toy();
  } catch (const std::exception& e) {
    toy_error = e.what();
  }
  auto with_toy = [&](void (*fn)(Outcome&, ToyRun&)) {
    return [&, fn](Outcome& o) {
      if (!toy) throw std::runtime_error("toy training failed: " + toy_error);
      fn(o, *toy);
    };
  };
  report(5, "overfit-smoke", with_toy(overfit));
  report(6, "intrinsics-head", with_toy(intrinsics_head));
  report(7, "attack-engine", with_toy(attack_engine));
  report(8, "corruption-engine", corruption_engine);
  report(9, "metric-oracles", metric_oracles);
  report(10, "protocol-invariance", protocol_invariance);

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
