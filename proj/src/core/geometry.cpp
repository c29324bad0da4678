#include "geometry.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace monosfm::geometry {

namespace F = torch::nn::functional;

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw DomainError("focal lengths must be positive (fx=" + std::to_string(fx) +
                      ", fy=" + std::to_string(fy) + ")");
  }
  if (width <= 0 || height <= 0) {
    throw DomainError("image size must be positive");
  }
}

torch::Tensor intrinsics_to_matrix(const Intrinsics& k) {
  k.validate();
  auto m = torch::eye(3, torch::kFloat64);
  auto a = m.accessor<double, 2>();
  a[0][0] = k.fx;
  a[1][1] = k.fy;
  a[0][2] = k.cx;
  a[1][2] = k.cy;
  return m;
}

torch::Tensor intrinsics_to_matrix(const torch::Tensor& fx, const torch::Tensor& fy,
                                   const torch::Tensor& cx, const torch::Tensor& cy) {
  auto zero = torch::zeros_like(fx);
  auto one = torch::ones_like(fx);
  auto rows = torch::stack({fx, zero, cx, zero, fy, cy, zero, zero, one}, -1);
  return rows.view({-1, 3, 3});
}

Intrinsics scale_intrinsics(const Intrinsics& k, double sx, double sy) {
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw DomainError("intrinsics scale factors must be positive");
  }
  Intrinsics out = k;
  out.fx *= sx;
  out.cx *= sx;
  out.fy *= sy;
  out.cy *= sy;
  out.width = std::max<int64_t>(1, std::llround(static_cast<double>(k.width) * sx));
  out.height = std::max<int64_t>(1, std::llround(static_cast<double>(k.height) * sy));
  return out;
}

std::array<double, 2> project(const Intrinsics& k, const std::array<double, 3>& point) {
  if (!(point[2] > kMinProjectedDepth)) {
    throw DomainError("point is behind the camera");
  }
  return {k.fx * point[0] / point[2] + k.cx, k.fy * point[1] / point[2] + k.cy};
}

bool PoseVector::is_finite() const {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(translation[i]) || !std::isfinite(rotation[i])) return false;
  }
  return true;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.rotation[r * 3 + c] = rotation[c * 3 + r];
  }
  for (int r = 0; r < 3; ++r) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) acc += out.rotation[r * 3 + c] * translation[c];
    out.translation[r] = -acc;
  }
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += rotation[r * 3 + k] * rhs.rotation[k * 3 + c];
      out.rotation[r * 3 + c] = acc;
    }
  }
  out.translation = apply(rhs.translation);
  return out;
}

std::array<double, 3> RigidTransform::apply(const std::array<double, 3>& p) const {
  std::array<double, 3> out{};
  for (int r = 0; r < 3; ++r) {
    out[r] = rotation[r * 3] * p[0] + rotation[r * 3 + 1] * p[1] + rotation[r * 3 + 2] * p[2] +
             translation[r];
  }
  return out;
}

torch::Tensor RigidTransform::matrix() const {
  auto m = torch::eye(4, torch::kFloat64);
  auto a = m.accessor<double, 2>();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) a[r][c] = rotation[r * 3 + c];
    a[r][3] = translation[r];
  }
  return m;
}

RigidTransform RigidTransform::from_matrix(const torch::Tensor& m) {
  if (m.dim() != 2 || m.size(0) < 3 || m.size(1) != 4) {
    throw ShapeError("expected a 3x4 or 4x4 transform matrix");
  }
  auto md = m.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  auto a = md.accessor<double, 2>();
  RigidTransform out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out.rotation[r * 3 + c] = a[r][c];
    out.translation[r] = a[r][3];
  }
  return out;
}

torch::Tensor axis_angle_to_rotation(const torch::Tensor& axis_angle) {
  if (axis_angle.dim() != 2 || axis_angle.size(1) != 3) {
    throw ShapeError("axis-angle tensor must be [B,3]");
  }
  const auto b = axis_angle.size(0);
  auto theta2 = axis_angle.pow(2).sum(1, /*keepdim=*/true).view({b, 1, 1});
  auto small = theta2 < 1e-8;
  auto safe2 = torch::where(small, torch::ones_like(theta2), theta2);
  auto safe = safe2.sqrt();
  // R = I + a K + b K^2 with series forms near zero so the gradient stays finite.
  auto a = torch::where(small, 1 - theta2 / 6, torch::sin(safe) / safe);
  auto c = torch::where(small, 0.5 - theta2 / 24, (1 - torch::cos(safe)) / safe2);

  auto x = axis_angle.select(1, 0);
  auto y = axis_angle.select(1, 1);
  auto z = axis_angle.select(1, 2);
  auto zero = torch::zeros_like(x);
  auto kx = torch::stack({zero, -z, y, z, zero, -x, -y, x, zero}, 1).view({b, 3, 3});
  auto eye = torch::eye(3, axis_angle.options()).expand({b, 3, 3});
  auto entries = eye + a * kx + c * torch::bmm(kx, kx);
  return entries;
}

torch::Tensor pose_to_matrix(const torch::Tensor& pose, bool invert) {
  if (pose.dim() != 2 || pose.size(1) != 6) {
    throw ShapeError("pose tensor must be [B,6]");
  }
  auto rot = axis_angle_to_rotation(pose.narrow(1, 0, 3));
  auto t = pose.narrow(1, 3, 3).unsqueeze(2);  // [B,3,1]
  if (invert) {
    rot = rot.transpose(1, 2);
    t = -torch::bmm(rot, t);
  }
  auto top = torch::cat({rot, t}, 2);  // [B,3,4]
  auto bottom = torch::zeros({pose.size(0), 1, 4}, pose.options());
  bottom.select(2, 3).fill_(1.0);
  return torch::cat({top, bottom}, 1);
}

RigidTransform pose_vector_to_transform(const PoseVector& v, bool invert) {
  auto pose = torch::tensor({v.rotation[0], v.rotation[1], v.rotation[2], v.translation[0],
                             v.translation[1], v.translation[2]},
                            torch::kFloat64)
                  .view({1, 6});
  return RigidTransform::from_matrix(pose_to_matrix(pose, invert)[0]);
}

torch::Tensor pixel_grid(int64_t height, int64_t width, torch::TensorOptions options) {
  auto opts = options.dtype(options.has_dtype() ? options.dtype() : caffe2::TypeMeta::Make<float>());
  auto v = torch::arange(height, opts).view({height, 1}).expand({height, width});
  auto u = torch::arange(width, opts).view({1, width}).expand({height, width});
  return torch::stack({u, v, torch::ones({height, width}, opts)}, 0);
}

torch::Tensor backproject(const torch::Tensor& depth, const torch::Tensor& inv_k) {
  const auto b = depth.size(0);
  const auto h = depth.size(2);
  const auto w = depth.size(3);
  auto grid = pixel_grid(h, w, depth.options()).view({1, 3, h * w}).expand({b, 3, h * w});
  auto rays = torch::bmm(inv_k.to(depth.dtype()), grid);
  return rays * depth.view({b, 1, h * w});
}

torch::Tensor pixels_to_normalized(const torch::Tensor& pixels, int64_t height, int64_t width) {
  auto u = pixels.select(-1, 0) / static_cast<double>(std::max<int64_t>(width - 1, 1));
  auto v = pixels.select(-1, 1) / static_cast<double>(std::max<int64_t>(height - 1, 1));
  return torch::stack({u * 2 - 1, v * 2 - 1}, -1);
}

Projection project_points(const torch::Tensor& points, const torch::Tensor& k,
                          const torch::Tensor& transform, int64_t height, int64_t width) {
  const auto b = points.size(0);
  auto kt = k.to(points.dtype());
  auto tr = transform.to(points.dtype());
  auto rot = tr.narrow(1, 0, 3).narrow(2, 0, 3);
  auto t = tr.narrow(1, 0, 3).narrow(2, 3, 1);
  auto cam = torch::bmm(rot, points) + t;     // [B,3,N]
  auto proj = torch::bmm(kt, cam);            // [B,3,N]
  auto z = proj.select(1, 2);
  auto in_front = z > kMinProjectedDepth;
  auto zc = z.clamp_min(kMinProjectedDepth);
  auto u = proj.select(1, 0) / zc;
  auto v = proj.select(1, 1) / zc;
  auto inside = in_front & (u >= -kBorderTolerance) & (u <= (width - 1) + kBorderTolerance) &
                (v >= -kBorderTolerance) & (v <= (height - 1) + kBorderTolerance);
  Projection out;
  out.pixels = torch::stack({u, v}, -1).view({b, height, width, 2});
  out.valid = inside.view({b, 1, height, width});
  return out;
}

SynthesizedView synthesize_view(const torch::Tensor& source, const torch::Tensor& target_depth,
                                const torch::Tensor& transform, const torch::Tensor& k) {
  if (source.dim() != 4 || target_depth.dim() != 4 || target_depth.size(1) != 1) {
    throw ShapeError("synthesize_view expects source [B,C,H,W] and depth [B,1,H,W]");
  }
  if (source.size(0) != target_depth.size(0) || source.size(2) != target_depth.size(2) ||
      source.size(3) != target_depth.size(3)) {
    throw ShapeError("source image and target depth must share batch and HxW");
  }
  if ((target_depth <= 0).any().item<bool>()) {
    throw DomainError("target depth must be positive everywhere");
  }
  const auto h = target_depth.size(2);
  const auto w = target_depth.size(3);
  // Projection runs in double so identity warps land exactly on the pixel grid.
  auto kd = k.to(torch::kFloat64);
  auto points = backproject(target_depth.to(torch::kFloat64), torch::linalg_inv(kd));
  auto projection = project_points(points, kd, transform, h, w);

  auto grid = pixels_to_normalized(projection.pixels, h, w).to(source.dtype());
  auto sampled = F::grid_sample(source, grid,
                                F::GridSampleFuncOptions()
                                    .mode(torch::kBilinear)
                                    .padding_mode(torch::kZeros)
                                    .align_corners(true));
  return {sampled, projection.valid, projection.pixels.to(source.dtype())};
}

}  // namespace monosfm::geometry
