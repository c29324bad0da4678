#include <gtest/gtest.h>
#include <torch/torch.h>

#include <cmath>

#include "errors.hpp"
#include "geometry.hpp"
#include "losses.hpp"
#include "test_support.hpp"

namespace monosfm::loss {
namespace {

using test::max_abs_diff;

// Reflection index for a 3x3 window: -1 -> 1, n -> n - 2.
int64_t reflect(int64_t i, int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

// Per-pixel SSIM with explicit window loops.
double ssim_at(const torch::Tensor& a, const torch::Tensor& b, int64_t v, int64_t u, double c1, double c2) {
  const auto h = a.size(0), w = a.size(1);
  double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dv = -1; dv <= 1; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      const double x = a[reflect(v + dv, h)][reflect(u + du, w)].item<double>();
      const double y = b[reflect(v + dv, h)][reflect(u + du, w)].item<double>();
      ma += x;
      mb += y;
      saa += x * x;
      sbb += y * y;
      sab += x * y;
    }
  }
  ma /= 9;
  mb /= 9;
  const double va = saa / 9 - ma * ma, vb = sbb / 9 - mb * mb, cov = sab / 9 - ma * mb;
  return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

TEST(SsimTest, IdenticalImagesScoreOne) {
  auto x = torch::rand({2, 3, 9, 11}, torch::kFloat64);
  EXPECT_LT(max_abs_diff(ssim(x, x), torch::ones_like(x)), 1e-12);
}

TEST(SsimTest, MatchesWindowLoop) {
  torch::manual_seed(1);
  auto a = torch::rand({1, 1, 5, 6}, torch::kFloat64);
  auto b = torch::rand({1, 1, 5, 6}, torch::kFloat64);
  const auto s = ssim(a, b);
  for (int64_t v = 0; v < 5; ++v) {
    for (int64_t u = 0; u < 6; ++u) {
      EXPECT_NEAR(s[0][0][v][u].item<double>(), ssim_at(a[0][0], b[0][0], v, u, 1e-4, 9e-4), 1e-5);
    }
  }
}

TEST(PhotometricErrorTest, ZeroForIdenticalImages) {
  auto x = torch::rand({2, 3, 8, 8});
  EXPECT_LT(photometric_error(x, x).abs().max().item<double>(), 1e-6);
}

TEST(PhotometricErrorTest, BoundedForImagesInUnitRange) {
  torch::manual_seed(2);
  for (int i = 0; i < 5; ++i) {
    const auto pe = photometric_error(torch::rand({2, 3, 8, 8}), torch::rand({2, 3, 8, 8}));
    EXPECT_EQ(pe.sizes(), (std::vector<int64_t>{2, 1, 8, 8}));
    EXPECT_GE(pe.min().item<double>(), 0.0);
    // alpha/2 * 2 + (1 - alpha) * 1 = 1.
    EXPECT_LE(pe.max().item<double>(), 1.0 + 1e-6);
  }
}

TEST(PhotometricErrorTest, ConstantImagesReduceToWeightedL1) {
  // Flat patches: SSIM = (2*0.5*0 + c1)/(0.25 + c1) for gray vs black.
  const auto gray = torch::full({1, 3, 6, 6}, 0.5, torch::kFloat64);
  const auto black = torch::zeros({1, 3, 6, 6}, torch::kFloat64);
  const double c1 = 1e-4, alpha = 0.85;
  const double s = c1 / (0.25 + c1);
  const double expected = alpha / 2 * (1 - s) + (1 - alpha) * 0.5;
  EXPECT_LT((photometric_error(gray, black) - expected).abs().max().item<double>(), 1e-9);
}

TEST(AutomaskTest, StaticSceneIsMaskedOut) {
  // A source identical to the target explains every pixel without any warp.
  auto target = torch::rand({1, 3, 8, 8});
  auto warped = torch::rand({1, 3, 8, 8});
  const auto r = min_reprojection_with_automask(target, {warped}, {target.clone()});
  EXPECT_EQ(r.mask.sum().item<int64_t>(), 0);
  EXPECT_EQ(r.per_image[0].item<double>(), 0.0);
}

TEST(AutomaskTest, PerfectWarpKeepsChangedPixels) {
  auto target = torch::rand({1, 3, 8, 8});
  auto source = torch::rand({1, 3, 8, 8});
  const auto r = min_reprojection_with_automask(target, {target.clone()}, {source});
  EXPECT_EQ(r.mask.sum().item<int64_t>(), 64);
  EXPECT_LT(r.error.abs().max().item<double>(), 1e-6);
}

TEST(AutomaskTest, MinimumOverViews) {
  auto target = torch::rand({1, 3, 8, 8});
  auto good = target * 0.98;
  auto bad = torch::rand({1, 3, 8, 8});
  const auto r = min_reprojection_with_automask(target, {bad, good}, {torch::zeros_like(target), torch::zeros_like(target)}, {}, {});
  const auto pe_good = photometric_error(target, good);
  const auto pe_bad = photometric_error(target, bad);
  EXPECT_LT(max_abs_diff(r.error, torch::minimum(pe_good, pe_bad)), 1e-6);
}

TEST(AutomaskTest, InvalidSamplesAreExcluded) {
  auto target = torch::rand({1, 3, 4, 4});
  auto valid = torch::ones({1, 1, 4, 4}, torch::kBool);
  valid[0][0][0][0] = false;
  LossOptions opts;
  opts.automask = false;
  const auto r = min_reprojection_with_automask(target, {target.clone()}, {}, {valid}, opts);
  EXPECT_FALSE(r.mask[0][0][0][0].item<bool>());
  EXPECT_EQ(r.mask.sum().item<int64_t>(), 15);
}

TEST(SmoothnessTest, ConstantDisparityIsSmooth) {
  EXPECT_EQ(smoothness(torch::full({1, 1, 8, 8}, 0.3), torch::rand({1, 3, 8, 8})).item<double>(), 0.0);
}

TEST(SmoothnessTest, InvariantToDisparityScale) {
  auto disp = torch::rand({2, 1, 8, 8}, torch::kFloat64) + 0.1;
  auto img = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  EXPECT_NEAR(smoothness(disp, img).item<double>(), smoothness(disp * 7.0, img).item<double>(), 1e-6);
}

TEST(SmoothnessTest, ImageEdgesDownweightDisparityEdges) {
  auto disp = torch::ones({1, 1, 8, 8}, torch::kFloat64);
  disp.narrow(3, 4, 4).fill_(2.0);
  auto flat = torch::zeros({1, 3, 8, 8}, torch::kFloat64);
  auto edge = flat.clone();
  edge.narrow(3, 4, 4).fill_(1.0);
  EXPECT_LT(smoothness(disp, edge).item<double>(), smoothness(disp, flat).item<double>());
}

torch::Tensor unit_k(int64_t h, int64_t w) {
  return geometry::intrinsics_to_matrix(geometry::Intrinsics{0.58 * w, 0.58 * w, (w - 1) / 2.0, (h - 1) / 2.0, w, h})
      .to(torch::kFloat32)
      .unsqueeze(0);
}

std::vector<torch::Tensor> pyramid(const torch::Tensor& full) {
  std::vector<torch::Tensor> out{full};
  for (int s = 1; s < 4; ++s) {
    out.push_back(torch::nn::functional::avg_pool2d(full, torch::nn::functional::AvgPool2dFuncOptions(1 << s)));
  }
  return out;
}

TEST(TotalLossTest, NonNegativeWithFullResolutionPhotometry) {
  torch::manual_seed(4);
  auto target = torch::rand({2, 3, 16, 32});
  std::vector<SourceView> sources{{torch::rand({2, 3, 16, 32}), torch::eye(4).expand({2, 4, 4}).clone()},
                                  {torch::rand({2, 3, 16, 32}), torch::eye(4).expand({2, 4, 4}).clone()}};
  sources[0].transform.select(2, 3).select(1, 0).fill_(0.2);
  const auto r = total_loss(target, sources, pyramid(torch::rand({2, 1, 16, 32})), unit_k(16, 32).expand({2, 3, 3}),
                            0.1, 100.0);
  EXPECT_GE(r.total.item<double>(), 0.0);
  EXPECT_GE(r.photometric, 0.0);
  EXPECT_GE(r.smoothness, 0.0);
  ASSERT_EQ(r.photometric_resolutions.size(), 4u);
  for (const auto& [h, w] : r.photometric_resolutions) {
    EXPECT_EQ(h, 16);
    EXPECT_EQ(w, 32);
  }
}

TEST(TotalLossTest, StaticTripletIsFullyMasked) {
  auto target = torch::rand({1, 3, 16, 32});
  std::vector<SourceView> sources{{target.clone(), torch::eye(4).unsqueeze(0)},
                                  {target.clone(), torch::eye(4).unsqueeze(0)}};
  const auto r = total_loss(target, sources, pyramid(torch::full({1, 1, 16, 32}, 0.5)), unit_k(16, 32), 0.1, 100.0);
  EXPECT_EQ(r.mask_coverage, 0.0);
  EXPECT_EQ(r.photometric, 0.0);
}

TEST(TotalLossTest, NonFiniteDisparityIsReported) {
  auto target = torch::rand({1, 3, 16, 32});
  auto disp = torch::full({1, 1, 16, 32}, 0.5);
  disp[0][0][3][3] = std::nanf("");
  std::vector<SourceView> sources{{torch::rand({1, 3, 16, 32}), torch::eye(4).unsqueeze(0)}};
  EXPECT_THROW(total_loss(target, sources, pyramid(disp), unit_k(16, 32), 0.1, 100.0), std::exception);
}

TEST(TotalLossTest, DisparityGradientMatchesFiniteDifferences) {
  torch::manual_seed(8);
  const int64_t h = 8, w = 16;
  auto target = torch::rand({1, 3, h, w}, torch::kFloat64);
  auto t = torch::eye(4, torch::kFloat64).unsqueeze(0);
  t[0][0][3] = 0.3;
  std::vector<SourceView> sources{{torch::rand({1, 3, h, w}, torch::kFloat64), t}};
  const auto k = unit_k(h, w).to(torch::kFloat64);
  LossOptions opts;
  opts.automask = false;
  opts.identity_noise = 0.0;
  auto disp = (torch::rand({1, 1, h, w}, torch::kFloat64) * 0.5 + 0.25).requires_grad_(true);
  auto f = [&](const torch::Tensor& d) {
    return total_loss(target, sources, {d}, k, 0.1, 100.0, opts).total;
  };
  const auto grad = torch::autograd::grad({f(disp)}, {disp})[0];
  const double eps = 1e-6;
  for (auto [v, u] : {std::pair<int, int>{3, 5}, {4, 9}, {5, 12}}) {
    auto dp = disp.detach().clone();
    auto dm = disp.detach().clone();
    dp[0][0][v][u] += eps;
    dm[0][0][v][u] -= eps;
    const double fd = (f(dp).item<double>() - f(dm).item<double>()) / (2 * eps);
    EXPECT_NEAR(grad[0][0][v][u].item<double>(), fd, 1e-4 * std::max(1.0, std::abs(fd))) << v << "," << u;
  }
}

}  // namespace
}  // namespace monosfm::loss
