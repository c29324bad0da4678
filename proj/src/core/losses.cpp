#include "losses.hpp"

#include <cmath>
#include <sstream>

#include "depth_network.hpp"
#include "errors.hpp"
#include "geometry.hpp"

namespace monosfm::loss {

namespace F = torch::nn::functional;

namespace {

// Error assigned to pixels whose warp left the source frame; larger than any
// photometric error of [0,1] images so such pixels never win the minimum.
constexpr double kInvalidError = 1e3;

torch::Tensor pool3(const torch::Tensor& x) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(1));
}

void check_finite(const torch::Tensor& t, const char* what, int scale) {
  if (!torch::isfinite(t.detach()).all().item<bool>()) {
    std::ostringstream msg;
    msg << "non-finite " << what;
    if (scale >= 0) msg << " at scale " << scale;
    msg << " (nan=" << torch::isnan(t.detach()).sum().item<int64_t>()
        << ", inf=" << torch::isinf(t.detach()).sum().item<int64_t>() << ")";
    throw TrainingError(msg.str());
  }
}

}  // namespace

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, double c1, double c2) {
  if (a.sizes() != b.sizes()) throw ShapeError("ssim inputs must have the same shape");
  if (a.dim() != 4) throw ShapeError("ssim expects [B,C,H,W]");
  auto pad = [](const torch::Tensor& x) {
    return F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReflect));
  };
  auto x = pad(a);
  auto y = pad(b);
  auto mu_x = pool3(x);
  auto mu_y = pool3(y);
  auto sigma_x = pool3(x * x) - mu_x * mu_x;
  auto sigma_y = pool3(y * y) - mu_y * mu_y;
  auto sigma_xy = pool3(x * y) - mu_x * mu_y;
  auto num = (2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2);
  auto den = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2);
  return num / den;
}

torch::Tensor photometric_error(const torch::Tensor& target, const torch::Tensor& synthesized,
                                const LossOptions& opts) {
  if (target.sizes() != synthesized.sizes()) {
    throw ShapeError("photometric_error inputs must have the same shape");
  }
  auto l1 = (target - synthesized).abs().mean(1, true);
  auto dssim = ((1 - ssim(target, synthesized, opts.ssim_c1, opts.ssim_c2)) / 2).clamp(0, 1).mean(1, true);
  return opts.ssim_weight * dssim + (1 - opts.ssim_weight) * l1;
}

MaskedReprojection min_reprojection_with_automask(const torch::Tensor& target,
                                                  const std::vector<torch::Tensor>& synthesized,
                                                  const std::vector<torch::Tensor>& identity_sources,
                                                  const std::vector<torch::Tensor>& valid,
                                                  const LossOptions& opts, torch::Generator generator) {
  if (synthesized.empty()) throw ShapeError("at least one synthesized view is required");
  if (opts.automask && identity_sources.size() != synthesized.size()) {
    throw ShapeError("need one raw source per synthesized view");
  }
  if (!valid.empty() && valid.size() != synthesized.size()) {
    throw ShapeError("need one validity mask per synthesized view");
  }

  std::vector<torch::Tensor> reproj;
  for (size_t i = 0; i < synthesized.size(); ++i) {
    auto pe = photometric_error(target, synthesized[i], opts);
    if (!valid.empty()) pe = torch::where(valid[i], pe, torch::full_like(pe, kInvalidError));
    reproj.push_back(pe);
  }
  auto min_reproj = std::get<0>(torch::cat(reproj, 1).min(1, true));

  torch::Tensor mask;
  if (opts.automask) {
    std::vector<torch::Tensor> ident;
    for (const auto& src : identity_sources) ident.push_back(photometric_error(target, src, opts));
    auto min_ident = std::get<0>(torch::cat(ident, 1).min(1, true));
    if (opts.identity_noise > 0.0) {
      auto noise = generator.defined()
                       ? torch::rand(min_ident.sizes(), generator, min_ident.options())
                       : torch::rand(min_ident.sizes(), min_ident.options());
      // Subtracting keeps exact ties on the stationary side.
      min_ident = min_ident - noise * opts.identity_noise;
    }
    mask = (min_reproj < min_ident.detach());
  } else {
    mask = min_reproj < kInvalidError;
  }

  auto maskf = mask.to(min_reproj.dtype());
  auto count = maskf.sum({1, 2, 3});
  auto per_image = (min_reproj * maskf).sum({1, 2, 3}) / count.clamp_min(1.0);
  return {min_reproj, mask, per_image};
}

torch::Tensor smoothness(const torch::Tensor& disp, const torch::Tensor& image) {
  if (disp.dim() != 4 || disp.size(1) != 1 || image.dim() != 4) {
    throw ShapeError("smoothness expects disp [B,1,H,W] and image [B,C,H,W]");
  }
  auto d = disp / (disp.mean({2, 3}, true) + 1e-7);
  auto w = d.size(3);
  auto h = d.size(2);
  auto grad_dx = (d.narrow(3, 0, w - 1) - d.narrow(3, 1, w - 1)).abs();
  auto grad_dy = (d.narrow(2, 0, h - 1) - d.narrow(2, 1, h - 1)).abs();
  auto grad_ix = (image.narrow(3, 0, w - 1) - image.narrow(3, 1, w - 1)).abs().mean(1, true);
  auto grad_iy = (image.narrow(2, 0, h - 1) - image.narrow(2, 1, h - 1)).abs().mean(1, true);
  return (grad_dx * torch::exp(-grad_ix)).mean() + (grad_dy * torch::exp(-grad_iy)).mean();
}

LossReport total_loss(const torch::Tensor& target, const std::vector<SourceView>& sources,
                      const std::vector<torch::Tensor>& disparities, const torch::Tensor& k,
                      double min_depth, double max_depth, const LossOptions& opts,
                      torch::Generator generator) {
  if (disparities.empty()) throw ShapeError("no disparity maps given");
  if (sources.empty()) throw ShapeError("at least one source view is required");
  const auto h = target.size(2);
  const auto w = target.size(3);

  std::vector<torch::Tensor> raw;
  for (const auto& s : sources) raw.push_back(s.image);

  LossReport report;
  torch::Tensor total = torch::zeros({}, target.options());
  const auto n_scales = static_cast<int>(disparities.size());
  for (int scale = 0; scale < n_scales; ++scale) {
    auto disp = disparities[scale];
    if (disp.size(2) != h || disp.size(3) != w) {
      disp = F::interpolate(disp, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{h, w})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    }
    auto depth = nets::disparity_to_depth(disp, min_depth, max_depth);
    check_finite(depth, "depth", scale);

    std::vector<torch::Tensor> warped;
    std::vector<torch::Tensor> valid;
    for (const auto& s : sources) {
      auto view = geometry::synthesize_view(s.image, depth, s.transform, k);
      warped.push_back(view.image);
      valid.push_back(view.valid);
    }
    report.photometric_resolutions.emplace_back(warped.front().size(2), warped.front().size(3));
    auto reproj = min_reprojection_with_automask(target, warped, raw, valid, opts, generator);
    auto photometric = reproj.per_image.mean();
    auto smooth = smoothness(disp, target) / std::pow(2.0, scale);
    check_finite(photometric, "photometric loss", scale);
    check_finite(smooth, "smoothness loss", scale);

    total = total + photometric + opts.smoothness_weight * smooth;
    report.photometric += photometric.item<double>();
    report.smoothness += smooth.item<double>();
    report.mask_coverage += reproj.mask.to(torch::kFloat64).mean().item<double>();
  }
  report.total = total / n_scales;
  report.photometric /= n_scales;
  report.smoothness /= n_scales;
  report.mask_coverage /= n_scales;
  check_finite(report.total, "total loss", -1);
  return report;
}

}  // namespace monosfm::loss
