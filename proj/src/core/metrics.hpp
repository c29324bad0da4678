#pragma once

#include <torch/torch.h>

#include <array>
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"

namespace monosfm::metrics {

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;
  double a3 = 0.0;

  std::array<double, 7> values() const { return {abs_rel, sq_rel, rmse, rmse_log, a1, a2, a3}; }
};

// Column names in table order: abs_rel sq_rel rmse rmse_log a1 a2 a3.
const std::array<const char*, 7>& depth_metric_columns();

// Errors over the pixels where `mask` is true. pred and gt are positive there.
// Accuracies use strict thresholds max(p/g, g/p) < 1.25^i. Computed in float64.
// Throws DomainError on an empty mask.
DepthMetrics depth_metrics(const torch::Tensor& pred, const torch::Tensor& gt, const torch::Tensor& mask);

DepthMetrics mean_metrics(const std::vector<DepthMetrics>& items);

// Fixed-width table; one row per (label, metrics) pair.
std::string format_depth_table(const std::vector<std::pair<std::string, DepthMetrics>>& rows);

struct OdometryMetrics {
  double t_err = 0.0;  // percent
  double r_err = 0.0;  // degrees per 100 m
  size_t segments = 0;
};

struct OdometryOptions {
  std::vector<double> lengths{100, 200, 300, 400, 500, 600, 700, 800};
  bool align_scale = true;
  size_t step = 1;  // start-frame stride
};

// Cumulative path length of a camera-to-world trajectory.
std::vector<double> trajectory_distances(const std::vector<geometry::RigidTransform>& poses);

// Expresses every pose relative to the first one.
std::vector<geometry::RigidTransform> align_origin(const std::vector<geometry::RigidTransform>& poses);

// Scale that best maps predicted camera positions onto ground truth, taken as
// the ratio of their Frobenius norms after origin alignment.
double trajectory_scale(const std::vector<geometry::RigidTransform>& pred,
                        const std::vector<geometry::RigidTransform>& gt);

// Chains relative target->source transforms of consecutive frames into a
// camera-to-world trajectory starting at the identity.
std::vector<geometry::RigidTransform> accumulate_relative(const std::vector<geometry::RigidTransform>& rel);

// Segment errors over every start frame and every length, averaged. Both
// trajectories are origin-aligned; the prediction is scale-aligned when
// requested. Returns nullopt (and warns on stderr) when no segment fits.
std::optional<OdometryMetrics> odometry_metrics(const std::vector<geometry::RigidTransform>& pred,
                                                const std::vector<geometry::RigidTransform>& gt,
                                                const OdometryOptions& opts = {});

// Rotation angle of a rotation matrix, radians.
double rotation_angle(const geometry::RigidTransform& t);

struct IntrinsicsError {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;  // signed percent
};

IntrinsicsError intrinsics_error(const geometry::Intrinsics& pred, const geometry::Intrinsics& gt);

// Energy source for the efficiency benchmark.
class PowerSampler {
 public:
  virtual ~PowerSampler() = default;
  virtual bool available() const = 0;
  virtual void start() = 0;
  // Joules consumed since start().
  virtual double stop() = 0;
};

// Trapezoidal integral of (seconds, watts) samples.
double integrate_power(const std::vector<std::pair<double, double>>& samples);

// Package energy counter under /sys/class/powercap (Linux RAPL).
class RaplPowerSampler : public PowerSampler {
 public:
  explicit RaplPowerSampler(std::string root = "/sys/class/powercap/intel-rapl:0");
  bool available() const override;
  void start() override;
  double stop() override;

 private:
  double read_joules() const;
  double max_joules() const;
  std::string root_;
  double start_joules_ = 0.0;
};

struct EfficiencyResult {
  double fps = 0.0;
  double seconds = 0.0;
  int64_t passes = 0;
  std::optional<double> joules_per_frame;
};

// Times `n_passes` calls of `forward` after `warmup` untimed calls.
EfficiencyResult efficiency_benchmark(const std::function<void()>& forward, int64_t n_passes, int64_t warmup = 3,
                                      PowerSampler* sampler = nullptr);

}  // namespace monosfm::metrics
