#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "errors.hpp"

namespace monosfm::metrics {

using geometry::RigidTransform;

const std::array<const char*, 7>& depth_metric_columns() {
  static const std::array<const char*, 7> cols{"abs_rel", "sq_rel", "rmse", "rmse_log", "a1", "a2", "a3"};
  return cols;
}

DepthMetrics depth_metrics(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask) {
  if (pred.sizes() != gt.sizes() || mask.sizes() != gt.sizes()) {
    throw ShapeError("depth_metrics: pred, gt and mask must share a shape");
  }
  const auto m = mask.to(torch::kBool);
  auto p = pred.to(torch::kFloat64).masked_select(m);
  auto g = gt.to(torch::kFloat64).masked_select(m);
  if (g.numel() == 0) throw DomainError("depth_metrics: empty mask");
  if ((p <= 0).any().item<bool>() || (g <= 0).any().item<bool>()) {
    throw DomainError("depth_metrics: depths must be positive on the mask");
  }
  const auto thresh = torch::max(g / p, p / g);
  const auto diff = p - g;
  const auto log_diff = torch::log(p) - torch::log(g);
  DepthMetrics r;
  r.abs_rel = (diff.abs() / g).mean().item<double>();
  r.sq_rel = (diff * diff / g).mean().item<double>();
  r.rmse = std::sqrt((diff * diff).mean().item<double>());
  r.rmse_log = std::sqrt((log_diff * log_diff).mean().item<double>());
  r.a1 = (thresh < 1.25).to(torch::kFloat64).mean().item<double>();
  r.a2 = (thresh < 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  r.a3 = (thresh < 1.25 * 1.25 * 1.25).to(torch::kFloat64).mean().item<double>();
  return r;
}

DepthMetrics mean_metrics(const std::vector<DepthMetrics>& items) {
  DepthMetrics r;
  if (items.empty()) return r;
  for (const auto& m : items) {
    r.abs_rel += m.abs_rel;
    r.sq_rel += m.sq_rel;
    r.rmse += m.rmse;
    r.rmse_log += m.rmse_log;
    r.a1 += m.a1;
    r.a2 += m.a2;
    r.a3 += m.a3;
  }
  const double n = static_cast<double>(items.size());
  r.abs_rel /= n;
  r.sq_rel /= n;
  r.rmse /= n;
  r.rmse_log /= n;
  r.a1 /= n;
  r.a2 /= n;
  r.a3 /= n;
  return r;
}

std::string format_depth_table(const std::vector<std::pair<std::string, DepthMetrics>>& rows) {
  size_t label_w = 5;
  for (const auto& [label, m] : rows) label_w = std::max(label_w, label.size());
  std::ostringstream s;
  s << std::left << std::setw(static_cast<int>(label_w)) << "split";
  for (const auto* c : depth_metric_columns()) s << " | " << std::right << std::setw(8) << c;
  s << '\n' << std::string(label_w, '-');
  for (size_t i = 0; i < depth_metric_columns().size(); ++i) s << "-+---------";
  s << '\n';
  for (const auto& [label, m] : rows) {
    s << std::left << std::setw(static_cast<int>(label_w)) << label << std::right << std::fixed
      << std::setprecision(3);
    for (double v : m.values()) s << " | " << std::setw(8) << v;
    s << '\n';
  }
  return s.str();
}

std::vector<double> trajectory_distances(const std::vector<RigidTransform>& poses) {
  std::vector<double> dist(poses.size(), 0.0);
  for (size_t i = 1; i < poses.size(); ++i) {
    double d2 = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double d = poses[i].translation[k] - poses[i - 1].translation[k];
      d2 += d * d;
    }
    dist[i] = dist[i - 1] + std::sqrt(d2);
  }
  return dist;
}

std::vector<RigidTransform> align_origin(const std::vector<RigidTransform>& poses) {
  std::vector<RigidTransform> out;
  if (poses.empty()) return out;
  const auto inv0 = poses.front().inverse();
  for (const auto& p : poses) out.push_back(inv0 * p);
  return out;
}

double trajectory_scale(const std::vector<RigidTransform>& pred, const std::vector<RigidTransform>& gt) {
  const auto p = align_origin(pred);
  const auto g = align_origin(gt);
  double np = 0.0;
  double ng = 0.0;
  for (size_t i = 0; i < std::min(p.size(), g.size()); ++i) {
    for (int k = 0; k < 3; ++k) {
      np += p[i].translation[k] * p[i].translation[k];
      ng += g[i].translation[k] * g[i].translation[k];
    }
  }
  if (np <= 0.0) return 1.0;
  return std::sqrt(ng / np);
}

std::vector<RigidTransform> accumulate_relative(const std::vector<RigidTransform>& rel) {
  // rel[i] maps points of frame i into frame i+1, so c2w(i+1) = c2w(i) * rel[i]^-1.
  std::vector<RigidTransform> out{RigidTransform::identity()};
  for (const auto& r : rel) out.push_back(out.back() * r.inverse());
  return out;
}

double rotation_angle(const RigidTransform& t) {
  const auto& r = t.rotation;
  // atan2 keeps precision for near-identity rotations where acos does not.
  const double c = 0.5 * (r[0] + r[4] + r[8] - 1.0);
  const double s = 0.5 * std::hypot(r[7] - r[5], r[2] - r[6], r[3] - r[1]);
  return std::atan2(s, c);
}

std::optional<OdometryMetrics> odometry_metrics(const std::vector<RigidTransform>& pred,
                                                const std::vector<RigidTransform>& gt,
                                                const OdometryOptions& opts) {
  if (pred.size() != gt.size()) throw ShapeError("odometry_metrics: trajectories differ in length");
  auto p = align_origin(pred);
  const auto g = align_origin(gt);
  if (opts.align_scale) {
    const double s = trajectory_scale(p, g);
    for (auto& t : p) {
      for (auto& v : t.translation) v *= s;
    }
  }
  const auto dist = trajectory_distances(g);
  double t_sum = 0.0;
  double r_sum = 0.0;
  size_t count = 0;
  const size_t step = std::max<size_t>(opts.step, 1);
  for (size_t first = 0; first < g.size(); first += step) {
    for (double len : opts.lengths) {
      size_t last = first;
      while (last < g.size() && !(dist[last] > dist[first] + len)) ++last;
      if (last >= g.size()) continue;
      const auto delta_gt = g[first].inverse() * g[last];
      const auto delta_pred = p[first].inverse() * p[last];
      const auto err = delta_pred.inverse() * delta_gt;
      const auto& t = err.translation;
      t_sum += std::sqrt(t[0] * t[0] + t[1] * t[1] + t[2] * t[2]) / len;
      r_sum += rotation_angle(err) / len;
      ++count;
    }
  }
  if (count == 0) {
    std::cerr << "warning: trajectory of " << (dist.empty() ? 0.0 : dist.back())
              << " m is shorter than every evaluation length; no odometry metrics\n";
    return std::nullopt;
  }
  OdometryMetrics m;
  m.t_err = 100.0 * t_sum / static_cast<double>(count);
  m.r_err = 100.0 * (180.0 / M_PI) * r_sum / static_cast<double>(count);
  m.segments = count;
  return m;
}

IntrinsicsError intrinsics_error(const geometry::Intrinsics& pred, const geometry::Intrinsics& gt) {
  gt.validate();
  auto pct = [](double p, double g) { return 100.0 * (p - g) / g; };
  return {pct(pred.fx, gt.fx), pct(pred.fy, gt.fy), pct(pred.cx, gt.cx), pct(pred.cy, gt.cy)};
}

double integrate_power(const std::vector<std::pair<double, double>>& samples) {
  double e = 0.0;
  for (size_t i = 1; i < samples.size(); ++i) {
    e += 0.5 * (samples[i].second + samples[i - 1].second) * (samples[i].first - samples[i - 1].first);
  }
  return e;
}

RaplPowerSampler::RaplPowerSampler(std::string root) : root_(std::move(root)) {}

bool RaplPowerSampler::available() const {
  std::ifstream in(root_ + "/energy_uj");
  double v;
  return static_cast<bool>(in >> v);
}

double RaplPowerSampler::read_joules() const {
  std::ifstream in(root_ + "/energy_uj");
  double uj = 0.0;
  if (!(in >> uj)) throw std::runtime_error("cannot read " + root_ + "/energy_uj");
  return uj * 1e-6;
}

double RaplPowerSampler::max_joules() const {
  std::ifstream in(root_ + "/max_energy_range_uj");
  double uj = 0.0;
  return (in >> uj) ? uj * 1e-6 : 0.0;
}

void RaplPowerSampler::start() { start_joules_ = read_joules(); }

double RaplPowerSampler::stop() {
  double e = read_joules() - start_joules_;
  if (e < 0.0) e += max_joules();  // counter wrapped
  return e;
}

EfficiencyResult efficiency_benchmark(const std::function<void()>& forward, int64_t n_passes, int64_t warmup,
                                      PowerSampler* sampler) {
  if (n_passes <= 0) throw DomainError("efficiency_benchmark: n_passes must be positive");
  if (warmup < 0) throw DomainError("efficiency_benchmark: warmup must not be negative");
  for (int64_t i = 0; i < warmup; ++i) forward();
  const bool energy = sampler && sampler->available();
  if (energy) sampler->start();
  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t i = 0; i < n_passes; ++i) forward();
  const auto t1 = std::chrono::steady_clock::now();
  EfficiencyResult r;
  r.passes = n_passes;
  r.seconds = std::chrono::duration<double>(t1 - t0).count();
  r.fps = static_cast<double>(n_passes) / std::max(r.seconds, 1e-12);
  if (energy) r.joules_per_frame = sampler->stop() / static_cast<double>(n_passes);
  return r;
}

}  // namespace monosfm::metrics
