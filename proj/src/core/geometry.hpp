#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>

// Pinhole camera model, SE(3) transforms and differentiable inverse warping.
//
// Pixel convention: pixel centres sit on integer coordinates, origin at the
// top-left pixel, u grows to the right and v grows downwards. Every module
// that converts between pixels and normalised sampling coordinates goes
// through this header so the convention stays in one place.

namespace monosfm::geometry {

inline constexpr double kMinProjectedDepth = 1e-7;
// Projections this close outside the frame still count as inside (pixels).
inline constexpr double kBorderTolerance = 1e-4;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int64_t width = 1;
  int64_t height = 1;

  // Throws DomainError when a focal length or an image dimension is not positive.
  void validate() const;

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

// 3x3 float64 matrix [[fx,0,cx],[0,fy,cy],[0,0,1]].
torch::Tensor intrinsics_to_matrix(const Intrinsics& k);

// Batched form for predicted intrinsics. Each argument is a [B] tensor;
// returns [B,3,3] with the dtype/device of `fx`. Differentiable.
torch::Tensor intrinsics_to_matrix(const torch::Tensor& fx, const torch::Tensor& fy,
                                   const torch::Tensor& cx, const torch::Tensor& cy);

Intrinsics scale_intrinsics(const Intrinsics& k, double sx, double sy);

// Pixel position of a camera-frame point. The point must lie in front of the camera.
std::array<double, 2> project(const Intrinsics& k, const std::array<double, 3>& point);

struct PoseVector {
  std::array<double, 3> translation{};
  std::array<double, 3> rotation{};  // axis-angle, radians

  bool is_finite() const;
};

struct RigidTransform {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  std::array<double, 3> translation{};

  static RigidTransform identity() { return {}; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;
  std::array<double, 3> apply(const std::array<double, 3>& p) const;
  // 4x4 float64 homogeneous matrix.
  torch::Tensor matrix() const;
  static RigidTransform from_matrix(const torch::Tensor& m);
};

RigidTransform pose_vector_to_transform(const PoseVector& v, bool invert = false);

// Rodrigues exponential map, [B,3] axis-angle -> [B,3,3]. Differentiable.
torch::Tensor axis_angle_to_rotation(const torch::Tensor& axis_angle);

// Network pose layout: [B,6] = (rx, ry, rz, tx, ty, tz). Returns [B,4,4].
// With `invert` set the inverse transform [R^T | -R^T t] is returned.
torch::Tensor pose_to_matrix(const torch::Tensor& pose, bool invert);

// Homogeneous pixel coordinates, shape [3,H,W]; entry (:, v, u) = (u, v, 1).
torch::Tensor pixel_grid(int64_t height, int64_t width, torch::TensorOptions options = {});

// depth [B,1,H,W], inv_k [B,3,3] -> camera points [B,3,H*W].
torch::Tensor backproject(const torch::Tensor& depth, const torch::Tensor& inv_k);

struct Projection {
  torch::Tensor pixels;  // [B,H,W,2] (u, v) in source pixel coordinates
  torch::Tensor valid;   // [B,1,H,W] bool, in front of camera and inside the frame
};

// points [B,3,N] -> pixels of an HxW image after applying transform [B,4,4] and k [B,3,3].
Projection project_points(const torch::Tensor& points, const torch::Tensor& k,
                          const torch::Tensor& transform, int64_t height, int64_t width);

struct SynthesizedView {
  torch::Tensor image;     // [B,C,H,W]
  torch::Tensor valid;     // [B,1,H,W] bool
  torch::Tensor sample_px; // [B,H,W,2] sampling location in the source, pixels
};

// Warps `source` [B,C,H,W] into the target view described by `target_depth`
// [B,1,H,W], target->source `transform` [B,4,4] and intrinsics `k` [B,3,3]:
//   p_s ~ K R D(p_t) K^-1 p_t + K t
// followed by bilinear sampling with zero padding. Throws DomainError on
// non-positive depth.
SynthesizedView synthesize_view(const torch::Tensor& source, const torch::Tensor& target_depth,
                                const torch::Tensor& transform, const torch::Tensor& k);

// Converts pixel coordinates [...,2] into grid_sample coordinates (align_corners = true).
torch::Tensor pixels_to_normalized(const torch::Tensor& pixels, int64_t height, int64_t width);

}  // namespace monosfm::geometry
