#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <vector>

namespace monosfm::robust {

enum class CorruptionKind {
  kGaussianNoise,
  kShotNoise,
  kImpulseNoise,
  kDefocusBlur,
  kGlassBlur,
  kMotionBlur,
  kZoomBlur,
  kSnow,
  kFrost,
  kFog,
  kBrightness,
  kContrast,
  kElastic,
  kPixelate,
  kJpeg,
};

// All fifteen kinds in benchmark order (noise, blur, weather, digital).
const std::vector<CorruptionKind>& all_corruption_kinds();

std::string to_string(CorruptionKind k);  // e.g. "gaussian-noise"
// Accepts hyphen or underscore spelling. Throws ConfigError on unknown names.
CorruptionKind corruption_kind_from_string(const std::string& s);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kGaussianNoise;
  int severity = 1;  // 1..5
  uint64_t seed = 0;

  void validate() const;
};

// "kind:severity", e.g. "brightness:5".
CorruptionSpec parse_corruption_spec(const std::string& text, uint64_t seed = 0);

// Parameter table compiled in from data/corruptions.json.
const nlohmann::json& corruption_table();
std::vector<double> corruption_params(CorruptionKind kind, int severity);

// image: [3,H,W] or [B,3,H,W] in [0,1]; output has the same shape, in [0,1].
// Batch element i uses seed + i. Deterministic for a given spec.
torch::Tensor corrupt(const torch::Tensor& image, const CorruptionSpec& spec);

// Diamond-square fractal on a mapsize x mapsize grid (power of two), normalised to [0,1].
torch::Tensor plasma_fractal(int64_t mapsize, double wibble_decay, std::mt19937_64& rng);

// Procedural ice texture in [0,1], [3,H,W].
torch::Tensor frost_texture(int64_t height, int64_t width, std::mt19937_64& rng);

}  // namespace monosfm::robust
