#include <gtest/gtest.h>
#include <torch/torch.h>

#include <set>

#include "corruptions.hpp"
#include "errors.hpp"
#include "test_support.hpp"

namespace monosfm::robust {
namespace {

// Smooth colour gradient with some texture so blurs and warps have an effect.
torch::Tensor test_image(int64_t h = 48, int64_t w = 64) {
  auto v = torch::linspace(0, 1, h).view({1, h, 1});
  auto u = torch::linspace(0, 1, w).view({1, 1, w});
  auto r = (0.2 + 0.6 * u).expand({1, h, w});
  auto g = (0.3 + 0.4 * v).expand({1, h, w});
  auto b = 0.5 + 0.3 * torch::sin(u * 20) * torch::cos(v * 13);
  return torch::cat({r, g, b}, 0).contiguous();
}

TEST(CorruptionTest, FifteenKindsInBenchmarkOrder) {
  const auto& kinds = all_corruption_kinds();
  ASSERT_EQ(kinds.size(), 15u);
  std::set<std::string> names;
  for (auto k : kinds) names.insert(to_string(k));
  EXPECT_EQ(names.size(), 15u);
  EXPECT_EQ(to_string(kinds.front()), "gaussian-noise");
  EXPECT_EQ(to_string(kinds.back()), "jpeg");
}

TEST(CorruptionTest, EverySeverityKeepsShapeAndRange) {
  const auto img = test_image();
  for (auto kind : all_corruption_kinds()) {
    for (int s = 1; s <= 5; ++s) {
      const auto out = corrupt(img, {kind, s, 1});
      const auto name = to_string(kind) + ":" + std::to_string(s);
      ASSERT_EQ(out.sizes(), img.sizes()) << name;
      EXPECT_TRUE(torch::isfinite(out).all().item<bool>()) << name;
      EXPECT_GE(out.min().item<double>(), 0.0) << name;
      EXPECT_LE(out.max().item<double>(), 1.0) << name;
      EXPECT_GT((out - img).abs().max().item<double>(), 0.0) << name;
    }
  }
}

TEST(CorruptionTest, DeterministicForASeed) {
  const auto img = test_image();
  for (auto kind : all_corruption_kinds()) {
    const auto a = corrupt(img, {kind, 3, 42});
    const auto b = corrupt(img, {kind, 3, 42});
    EXPECT_TRUE(torch::equal(a, b)) << to_string(kind);
  }
  EXPECT_FALSE(torch::equal(corrupt(img, {CorruptionKind::kGaussianNoise, 3, 1}),
                            corrupt(img, {CorruptionKind::kGaussianNoise, 3, 2})));
}

TEST(CorruptionTest, BatchElementsUseConsecutiveSeeds) {
  const auto img = test_image();
  const auto batch = torch::stack({img, img});
  const auto out = corrupt(batch, {CorruptionKind::kShotNoise, 2, 10});
  EXPECT_TRUE(torch::equal(out[1], corrupt(img, {CorruptionKind::kShotNoise, 2, 11})));
}

TEST(CorruptionTest, GaussianNoiseHasTabulatedSigma) {
  const double sigma = corruption_params(CorruptionKind::kGaussianNoise, 5).at(0);
  EXPECT_DOUBLE_EQ(sigma, 0.38);
  const auto flat = torch::full({3, 128, 128}, 0.5);
  const auto noise = corrupt(flat, {CorruptionKind::kGaussianNoise, 5, 3}) - flat;
  // Clipping at 0 and 1 leaves |n| < 0.5 intact, so the median absolute deviation is unbiased.
  const double est = noise.abs().flatten().median().item<double>() / 0.6744897501960817;
  EXPECT_NEAR(est, sigma, 0.1 * sigma);
}

TEST(CorruptionTest, BrightnessRaisesTheMean) {
  const auto img = test_image();
  double prev = img.mean().item<double>();
  for (int s = 1; s <= 5; ++s) {
    const double m = corrupt(img, {CorruptionKind::kBrightness, s, 0}).mean().item<double>();
    EXPECT_GT(m, prev) << s;
    prev = m;
  }
}

TEST(CorruptionTest, ContrastShrinksSpread) {
  const auto img = test_image();
  EXPECT_LT(corrupt(img, {CorruptionKind::kContrast, 5, 0}).std().item<double>(), img.std().item<double>());
}

TEST(CorruptionTest, SpecParsing) {
  const auto s = parse_corruption_spec("motion_blur:4", 9);
  EXPECT_EQ(s.kind, CorruptionKind::kMotionBlur);
  EXPECT_EQ(s.severity, 4);
  EXPECT_EQ(s.seed, 9u);
  EXPECT_EQ(parse_corruption_spec("zoom-blur:1").kind, CorruptionKind::kZoomBlur);
  EXPECT_THROW(parse_corruption_spec("fog:6"), ConfigError);
  EXPECT_THROW(parse_corruption_spec("fog"), ConfigError);
  EXPECT_THROW(parse_corruption_spec("smog:2"), ConfigError);
  EXPECT_THROW(parse_corruption_spec("fog:two"), ConfigError);
}

TEST(CorruptionTest, PlasmaFractalIsNormalised) {
  std::mt19937_64 rng(0);
  const auto p = plasma_fractal(64, 3.0, rng);
  EXPECT_NEAR(p.min().item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(p.max().item<double>(), 1.0, 1e-6);
  EXPECT_THROW(plasma_fractal(48, 3.0, rng), DomainError);
}

}  // namespace
}  // namespace monosfm::robust
