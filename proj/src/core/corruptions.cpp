#include "corruptions.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace monosfm::robust {

extern const char* const kCorruptionTableJson;

namespace {

const std::vector<std::pair<CorruptionKind, const char*>>& kind_names() {
  static const std::vector<std::pair<CorruptionKind, const char*>> names{
      {CorruptionKind::kGaussianNoise, "gaussian-noise"}, {CorruptionKind::kShotNoise, "shot-noise"},
      {CorruptionKind::kImpulseNoise, "impulse-noise"},   {CorruptionKind::kDefocusBlur, "defocus-blur"},
      {CorruptionKind::kGlassBlur, "glass-blur"},         {CorruptionKind::kMotionBlur, "motion-blur"},
      {CorruptionKind::kZoomBlur, "zoom-blur"},           {CorruptionKind::kSnow, "snow"},
      {CorruptionKind::kFrost, "frost"},                  {CorruptionKind::kFog, "fog"},
      {CorruptionKind::kBrightness, "brightness"},        {CorruptionKind::kContrast, "contrast"},
      {CorruptionKind::kElastic, "elastic"},              {CorruptionKind::kPixelate, "pixelate"},
      {CorruptionKind::kJpeg, "jpeg"}};
  return names;
}

// --- tensor <-> HxWx3 float Mat ---------------------------------------------------

cv::Mat to_mat(const torch::Tensor& chw) {
  auto t = chw.detach().to(torch::kCPU, torch::kFloat32).permute({1, 2, 0}).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC3, t.data_ptr<float>());
  return m.clone();
}

torch::Tensor to_tensor(const cv::Mat& m, torch::ScalarType dtype) {
  cv::Mat f = m.isContinuous() ? m : m.clone();
  auto t = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).contiguous().to(dtype);
}

cv::Mat clip01(const cv::Mat& m) {
  cv::Mat out;
  cv::min(cv::max(m, 0.0), 1.0, out);
  return out;
}

// --- shared building blocks -------------------------------------------------------

// Zoom about the image centre, keeping the size; the zoomed-out border reflects.
cv::Mat center_zoom(const cv::Mat& x, double z) {
  const double cx = (x.cols - 1) / 2.0;
  const double cy = (x.rows - 1) / 2.0;
  cv::Mat m = (cv::Mat_<double>(2, 3) << z, 0, (1 - z) * cx, 0, z, (1 - z) * cy);
  cv::Mat out;
  cv::warpAffine(x, out, m, x.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return out;
}

// One-sided Gaussian motion kernel along `angle_deg`, edge-replicating shifts.
cv::Mat motion_blur(const cv::Mat& x, int radius, double sigma, double angle_deg) {
  const int width = radius * 2 + 1;
  std::vector<double> kernel(width);
  double z = 0.0;
  for (int i = 0; i < width; ++i) {
    kernel[i] = std::exp(-(i * i) / (2.0 * sigma * sigma)) / (std::sqrt(2 * M_PI) * sigma);
    z += kernel[i];
  }
  const double py = width * std::sin(angle_deg * M_PI / 180.0);
  const double px = width * std::cos(angle_deg * M_PI / 180.0);
  const double hyp = std::hypot(px, py);
  cv::Mat out = cv::Mat::zeros(x.size(), x.type());
  for (int i = 0; i < width; ++i) {
    const int dy = -static_cast<int>(std::ceil(i * py / hyp - 0.5));
    const int dx = -static_cast<int>(std::ceil(i * px / hyp - 0.5));
    if (std::abs(dy) >= x.rows || std::abs(dx) >= x.cols) break;
    cv::Mat map_x(x.size(), CV_32F);
    cv::Mat map_y(x.size(), CV_32F);
    for (int v = 0; v < x.rows; ++v) {
      for (int u = 0; u < x.cols; ++u) {
        map_x.at<float>(v, u) = static_cast<float>(std::clamp(u - dx, 0, x.cols - 1));
        map_y.at<float>(v, u) = static_cast<float>(std::clamp(v - dy, 0, x.rows - 1));
      }
    }
    cv::Mat shifted;
    cv::remap(x, shifted, map_x, map_y, cv::INTER_NEAREST);
    out += shifted * (kernel[i] / z);
  }
  return out;
}

cv::Mat gaussian(const cv::Mat& x, double sigma) {
  cv::Mat out;
  cv::GaussianBlur(x, out, cv::Size(0, 0), sigma, sigma, cv::BORDER_REPLICATE);
  return out;
}

// --- the fifteen corruptions ------------------------------------------------------

cv::Mat gaussian_noise(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(c[0]));
  cv::Mat out = x.clone();
  cv::Mat flat = out.reshape(1);  // per channel value, not per pixel
  for (auto it = flat.begin<float>(); it != flat.end<float>(); ++it) *it += n(rng);
  return clip01(out);
}

cv::Mat shot_noise(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  cv::Mat out = x.clone();
  cv::Mat flat = out.reshape(1);
  for (auto it = flat.begin<float>(); it != flat.end<float>(); ++it) {
    const double lambda = std::max(0.0, static_cast<double>(*it) * c[0]);
    const double k = lambda > 0.0 ? static_cast<double>(std::poisson_distribution<int64_t>(lambda)(rng)) : 0.0;
    *it = static_cast<float>(k / c[0]);
  }
  return clip01(out);
}

cv::Mat impulse_noise(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  cv::Mat out = x.clone();
  cv::Mat flat = out.reshape(1);
  for (auto it = flat.begin<float>(); it != flat.end<float>(); ++it) {
    if (u(rng) < c[0]) *it = u(rng) < 0.5 ? 0.0f : 1.0f;
  }
  return out;
}

cv::Mat defocus_blur(const cv::Mat& x, const std::vector<double>& c) {
  const int radius = static_cast<int>(c[0]);
  const int half = radius <= 8 ? 8 : radius;
  cv::Mat disk(2 * half + 1, 2 * half + 1, CV_32F);
  for (int y = -half; y <= half; ++y) {
    for (int xx = -half; xx <= half; ++xx) {
      disk.at<float>(y + half, xx + half) = (xx * xx + y * y <= radius * radius) ? 1.0f : 0.0f;
    }
  }
  disk /= cv::sum(disk)[0];
  const int k = radius <= 8 ? 3 : 5;
  cv::GaussianBlur(disk, disk, cv::Size(k, k), c[1]);
  cv::Mat out;
  cv::filter2D(x, out, -1, disk, cv::Point(-1, -1), 0, cv::BORDER_REFLECT_101);
  return clip01(out);
}

cv::Mat glass_blur(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  const double sigma = c[0];
  const int delta = static_cast<int>(c[1]);
  const int iterations = static_cast<int>(c[2]);
  cv::Mat q;
  gaussian(x, sigma).convertTo(q, CV_8UC3, 255.0);
  std::uniform_int_distribution<int> d(-delta, delta - 1);
  for (int it = 0; it < iterations; ++it) {
    for (int h = q.rows - delta; h > delta; --h) {
      for (int w = q.cols - delta; w > delta; --w) {
        const int dx = d(rng);
        const int dy = d(rng);
        std::swap(q.at<cv::Vec3b>(h, w), q.at<cv::Vec3b>(h + dy, w + dx));
      }
    }
  }
  cv::Mat f;
  q.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return clip01(gaussian(f, sigma));
}

cv::Mat zoom_blur(const cv::Mat& x, const std::vector<double>& c) {
  cv::Mat acc = x.clone();
  int n = 1;
  for (double z = 1.0; z < c[0] - 1e-9; z += c[1]) {
    acc += center_zoom(x, z);
    ++n;
  }
  return clip01(acc / n);
}

cv::Mat to_gray3(const cv::Mat& x) {
  cv::Mat g;
  cv::cvtColor(x, g, cv::COLOR_RGB2GRAY);
  cv::Mat g3;
  cv::cvtColor(g, g3, cv::COLOR_GRAY2RGB);
  return g3;
}

cv::Mat snow(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  std::normal_distribution<float> n(static_cast<float>(c[0]), static_cast<float>(c[1]));
  cv::Mat layer(x.size(), CV_32F);
  for (auto it = layer.begin<float>(); it != layer.end<float>(); ++it) *it = n(rng);
  layer = center_zoom(layer, c[2]);
  cv::threshold(layer, layer, c[3], 0.0, cv::THRESH_TOZERO);
  layer = clip01(layer);
  std::uniform_real_distribution<double> angle(-135.0, -45.0);
  layer = motion_blur(layer, static_cast<int>(c[4]), c[5], angle(rng));
  cv::Mat flipped;
  cv::flip(layer, flipped, -1);
  cv::Mat flakes = layer + flipped;
  cv::Mat flakes3;
  cv::cvtColor(flakes, flakes3, cv::COLOR_GRAY2RGB);
  cv::Mat lifted = cv::max(x, to_gray3(x) * 1.5 + cv::Scalar::all(0.5));
  cv::Mat out = x * c[6] + lifted * (1.0 - c[6]);
  return clip01(out + flakes3);
}

cv::Mat from_tensor_gray(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat32).contiguous();
  return cv::Mat(static_cast<int>(c.size(0)), static_cast<int>(c.size(1)), CV_32F, c.data_ptr<float>()).clone();
}

cv::Mat frost(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  cv::Mat tex = to_mat(frost_texture(x.rows, x.cols, rng));
  return clip01(x * c[0] + tex * c[1]);
}

int64_t next_pow2(int64_t v) {
  int64_t p = 1;
  while (p < v) p *= 2;
  return p;
}

cv::Mat fog(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  double max_val = 0.0;
  cv::minMaxLoc(x.reshape(1), nullptr, &max_val);
  const auto size = next_pow2(std::max<int64_t>(x.rows, x.cols));
  auto plasma = plasma_fractal(size, c[1], rng).slice(0, 0, x.rows).slice(1, 0, x.cols);
  cv::Mat p = from_tensor_gray(plasma);
  cv::Mat p3;
  cv::cvtColor(p, p3, cv::COLOR_GRAY2RGB);
  cv::Mat out = x + p3 * c[0];
  return clip01(out * (max_val / (max_val + c[0])));
}

cv::Mat brightness(const cv::Mat& x, const std::vector<double>& c) {
  cv::Mat hsv;
  cv::cvtColor(x, hsv, cv::COLOR_RGB2HSV);
  std::vector<cv::Mat> ch;
  cv::split(hsv, ch);
  ch[2] = cv::min(cv::max(ch[2] + c[0], 0.0), 1.0);
  cv::merge(ch, hsv);
  cv::Mat out;
  cv::cvtColor(hsv, out, cv::COLOR_HSV2RGB);
  return clip01(out);
}

cv::Mat contrast(const cv::Mat& x, const std::vector<double>& c) {
  const cv::Scalar means = cv::mean(x);
  cv::Mat out = (x - means) * c[0] + means;
  return clip01(out);
}

cv::Mat elastic(const cv::Mat& x, const std::vector<double>& c, std::mt19937_64& rng) {
  const double side = std::min(x.rows, x.cols);
  const double alpha = c[0] * side;
  const double sigma = c[1] * side;
  const double affine = c[2] * side;
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::uniform_real_distribution<float> a(static_cast<float>(-affine), static_cast<float>(affine));

  const cv::Point2f centre(static_cast<float>(x.cols / 2), static_cast<float>(x.rows / 2));
  const float sq = static_cast<float>(static_cast<int>(side) / 3);
  cv::Point2f src[3] = {centre + cv::Point2f(sq, sq), cv::Point2f(centre.x + sq, centre.y - sq),
                        centre - cv::Point2f(sq, sq)};
  cv::Point2f dst[3];
  for (int i = 0; i < 3; ++i) dst[i] = src[i] + cv::Point2f(a(rng), a(rng));
  cv::Mat warped;
  cv::warpAffine(x, warped, cv::getAffineTransform(src, dst), x.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);

  auto field = [&] {
    cv::Mat f(x.size(), CV_32F);
    for (auto it = f.begin<float>(); it != f.end<float>(); ++it) *it = u(rng);
    const int k = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
    cv::GaussianBlur(f, f, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT);
    return cv::Mat(f * alpha);
  };
  const cv::Mat dx = field();
  const cv::Mat dy = field();
  cv::Mat map_x(x.size(), CV_32F);
  cv::Mat map_y(x.size(), CV_32F);
  for (int v = 0; v < x.rows; ++v) {
    for (int w = 0; w < x.cols; ++w) {
      map_x.at<float>(v, w) = static_cast<float>(w) + dx.at<float>(v, w);
      map_y.at<float>(v, w) = static_cast<float>(v) + dy.at<float>(v, w);
    }
  }
  cv::Mat out;
  cv::remap(warped, out, map_x, map_y, cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
  return clip01(out);
}

cv::Mat pixelate(const cv::Mat& x, const std::vector<double>& c) {
  const int w = std::max(1, static_cast<int>(x.cols * c[0]));
  const int h = std::max(1, static_cast<int>(x.rows * c[0]));
  cv::Mat small;
  cv::resize(x, small, cv::Size(w, h), 0, 0, cv::INTER_AREA);
  cv::Mat out;
  cv::resize(small, out, x.size(), 0, 0, cv::INTER_NEAREST);
  return clip01(out);
}

cv::Mat jpeg(const cv::Mat& x, const std::vector<double>& c) {
  cv::Mat bgr8;
  cv::Mat bgr;
  cv::cvtColor(x, bgr, cv::COLOR_RGB2BGR);
  bgr.convertTo(bgr8, CV_8UC3, 255.0);
  std::vector<uchar> buf;
  cv::imencode(".jpg", bgr8, buf, {cv::IMWRITE_JPEG_QUALITY, static_cast<int>(c[0])});
  cv::Mat decoded = cv::imdecode(buf, cv::IMREAD_COLOR);
  cv::Mat out;
  decoded.convertTo(out, CV_32FC3, 1.0 / 255.0);
  cv::cvtColor(out, out, cv::COLOR_BGR2RGB);
  return out;
}

cv::Mat apply(const cv::Mat& x, CorruptionKind kind, const std::vector<double>& c, std::mt19937_64& rng) {
  switch (kind) {
    case CorruptionKind::kGaussianNoise: return gaussian_noise(x, c, rng);
    case CorruptionKind::kShotNoise: return shot_noise(x, c, rng);
    case CorruptionKind::kImpulseNoise: return impulse_noise(x, c, rng);
    case CorruptionKind::kDefocusBlur: return defocus_blur(x, c);
    case CorruptionKind::kGlassBlur: return glass_blur(x, c, rng);
    case CorruptionKind::kMotionBlur: {
      std::uniform_real_distribution<double> angle(-45.0, 45.0);
      return clip01(motion_blur(x, static_cast<int>(c[0]), c[1], angle(rng)));
    }
    case CorruptionKind::kZoomBlur: return zoom_blur(x, c);
    case CorruptionKind::kSnow: return snow(x, c, rng);
    case CorruptionKind::kFrost: return frost(x, c, rng);
    case CorruptionKind::kFog: return fog(x, c, rng);
    case CorruptionKind::kBrightness: return brightness(x, c);
    case CorruptionKind::kContrast: return contrast(x, c);
    case CorruptionKind::kElastic: return elastic(x, c, rng);
    case CorruptionKind::kPixelate: return pixelate(x, c);
    case CorruptionKind::kJpeg: return jpeg(x, c);
  }
  throw ConfigError("corruption", "unhandled corruption kind");
}

}  // namespace

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = [] {
    std::vector<CorruptionKind> k;
    for (const auto& [kind, name] : kind_names()) k.push_back(kind);
    return k;
  }();
  return kinds;
}

std::string to_string(CorruptionKind k) {
  for (const auto& [kind, name] : kind_names()) {
    if (kind == k) return name;
  }
  return "unknown";
}

CorruptionKind corruption_kind_from_string(const std::string& s) {
  std::string n = s;
  std::replace(n.begin(), n.end(), '_', '-');
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (n == "jpeg-compression") n = "jpeg";
  if (n == "elastic-transform") n = "elastic";
  for (const auto& [kind, name] : kind_names()) {
    if (n == name) return kind;
  }
  throw ConfigError("corruption", "unknown corruption kind '" + s + "'");
}

void CorruptionSpec::validate() const {
  if (severity < 1 || severity > 5) throw ConfigError("corruption", "severity must lie in [1, 5]");
}

CorruptionSpec parse_corruption_spec(const std::string& text, uint64_t seed) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("corruption", "expected kind:severity, got '" + text + "'");
  CorruptionSpec s;
  s.kind = corruption_kind_from_string(text.substr(0, colon));
  try {
    size_t used = 0;
    s.severity = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("corruption", "severity in '" + text + "' is not an integer");
  }
  s.seed = seed;
  s.validate();
  return s;
}

const nlohmann::json& corruption_table() {
  static const nlohmann::json table = nlohmann::json::parse(kCorruptionTableJson);
  return table;
}

std::vector<double> corruption_params(CorruptionKind kind, int severity) {
  if (severity < 1 || severity > 5) throw ConfigError("corruption", "severity must lie in [1, 5]");
  std::string key = to_string(kind);
  std::replace(key.begin(), key.end(), '-', '_');
  return corruption_table().at(key).at("levels").at(severity - 1).get<std::vector<double>>();
}

torch::Tensor corrupt(const torch::Tensor& image, const CorruptionSpec& spec) {
  spec.validate();
  if (image.dim() == 4) {
    std::vector<torch::Tensor> out;
    for (int64_t i = 0; i < image.size(0); ++i) {
      auto s = spec;
      s.seed = spec.seed + static_cast<uint64_t>(i);
      out.push_back(corrupt(image[i], s));
    }
    return torch::stack(out);
  }
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("corrupt expects [3,H,W] or [B,3,H,W]");
  const auto params = corruption_params(spec.kind, spec.severity);
  // Mix kind and severity into the stream so different specs with one seed are independent.
  std::seed_seq seq{static_cast<uint64_t>(spec.seed), static_cast<uint64_t>(spec.kind),
                    static_cast<uint64_t>(spec.severity)};
  std::mt19937_64 rng(seq);
  return to_tensor(apply(to_mat(image), spec.kind, params, rng), image.scalar_type());
}

torch::Tensor plasma_fractal(int64_t mapsize, double wibble_decay, std::mt19937_64& rng) {
  if (mapsize < 2 || (mapsize & (mapsize - 1)) != 0) throw DomainError("plasma mapsize must be a power of two");
  const int64_t n = mapsize;
  std::vector<double> map(n * n, 0.0);
  auto at = [&](int64_t r, int64_t c) -> double& { return map[((r % n + n) % n) * n + ((c % n + n) % n)]; };
  double wibble = 100.0;
  for (int64_t step = n; step >= 2; step /= 2) {
    std::uniform_real_distribution<double> noise(-wibble, wibble);
    const int64_t half = step / 2;
    const int64_t cells = n / step;
    for (int64_t i = 0; i < cells; ++i) {
      for (int64_t j = 0; j < cells; ++j) {
        const double sum = at(i * step, j * step) + at((i + 1) * step, j * step) + at(i * step, (j + 1) * step) +
                           at((i + 1) * step, (j + 1) * step);
        at(half + i * step, half + j * step) = sum / 4.0 + wibble * noise(rng);
      }
    }
    for (int64_t i = 0; i < cells; ++i) {
      for (int64_t j = 0; j < cells; ++j) {
        const double sum = at(half + i * step, half + j * step) + at(half + (i - 1) * step, half + j * step) +
                           at(i * step, j * step) + at(i * step, (j + 1) * step);
        at(i * step, half + j * step) = sum / 4.0 + wibble * noise(rng);
      }
    }
    for (int64_t i = 0; i < cells; ++i) {
      for (int64_t j = 0; j < cells; ++j) {
        const double sum = at(half + i * step, half + j * step) + at(half + i * step, half + (j - 1) * step) +
                           at(i * step, j * step) + at((i + 1) * step, j * step);
        at(half + i * step, j * step) = sum / 4.0 + wibble * noise(rng);
      }
    }
    wibble /= wibble_decay;
  }
  auto t = torch::from_blob(map.data(), {n, n}, torch::kFloat64).clone();
  t = t - t.min();
  return t / t.max().clamp_min(1e-12);
}

torch::Tensor frost_texture(int64_t height, int64_t width, std::mt19937_64& rng) {
  const auto size = next_pow2(std::max(height, width));
  cv::Mat base = from_tensor_gray(plasma_fractal(size, 1.8, rng).slice(0, 0, height).slice(1, 0, width));
  cv::pow(base, 1.5, base);
  // Needle-like crystals: short bright strokes at random orientations.
  cv::Mat needles = cv::Mat::zeros(static_cast<int>(height), static_cast<int>(width), CV_32F);
  std::uniform_real_distribution<double> px(0.0, static_cast<double>(width));
  std::uniform_real_distribution<double> py(0.0, static_cast<double>(height));
  std::uniform_real_distribution<double> ang(0.0, M_PI);
  std::uniform_real_distribution<double> len(0.02, 0.12);
  std::uniform_real_distribution<double> bright(0.4, 1.0);
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  const int count = static_cast<int>(height * width / 60);
  for (int i = 0; i < count; ++i) {
    const cv::Point2d p(px(rng), py(rng));
    const double a = ang(rng);
    const double l = len(rng) * diag;
    const cv::Point2d q = p + cv::Point2d(std::cos(a) * l, std::sin(a) * l);
    cv::line(needles, p, q, cv::Scalar(bright(rng)), 1, cv::LINE_AA);
  }
  cv::GaussianBlur(needles, needles, cv::Size(0, 0), 0.8);
  cv::Mat gray = base * 0.55 + needles * 0.45;
  gray = cv::min(gray, 1.0);
  std::vector<cv::Mat> ch{gray * 0.88, gray * 0.94, gray * 1.0};
  cv::Mat rgb;
  cv::merge(ch, rgb);
  return to_tensor(rgb, torch::kFloat32);
}

}  // namespace monosfm::robust
