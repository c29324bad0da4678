#include "dataset.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "util.hpp"

namespace monosfm::data {

namespace F = torch::nn::functional;
using geometry::Intrinsics;
using geometry::RigidTransform;

DatasetFormat dataset_format_from_string(const std::string& s) {
  if (s == "kitti") return DatasetFormat::kKitti;
  if (s == "ddad") return DatasetFormat::kDdad;
  throw ConfigError("data.format", "unknown dataset format '" + s + "' (kitti, ddad)");
}

std::string to_string(DatasetFormat f) { return f == DatasetFormat::kKitti ? "kitti" : "ddad"; }

// --- image files ------------------------------------------------------------------

namespace {

torch::Tensor mat_to_tensor(const cv::Mat& m) {
  cv::Mat f;
  m.convertTo(f, CV_32F);
  if (!f.isContinuous()) f = f.clone();
  auto t = torch::from_blob(f.data, {f.rows, f.cols, f.channels()}, torch::kFloat32).clone();
  return t.permute({2, 0, 1}).contiguous();
}

cv::Mat tensor_to_mat(const torch::Tensor& chw, int type) {
  auto t = chw.detach().to(torch::kCPU, torch::kFloat32);
  if (t.dim() == 2) t = t.unsqueeze(0);
  t = t.permute({1, 2, 0}).contiguous();
  const int c = static_cast<int>(t.size(2));
  cv::Mat f(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_32FC(c), t.data_ptr<float>());
  cv::Mat out;
  f.convertTo(out, CV_MAKETYPE(CV_MAT_DEPTH(type), c));
  return out;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

torch::Tensor load_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot read image " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return mat_to_tensor(rgb) / 255.0;
}

void save_image_png(const fs::path& path, const torch::Tensor& image) {
  auto img = (image.detach().clamp(0, 1) * 255.0).round();
  cv::Mat m = tensor_to_mat(img, CV_8U);
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write image " + path.string());
}

torch::Tensor resize_image(const torch::Tensor& image, int64_t height, int64_t width) {
  if (image.size(-2) == height && image.size(-1) == width) return image;
  auto x = image.dim() == 3 ? image.unsqueeze(0) : image;
  auto out = F::interpolate(x, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{height, width})
                                   .mode(torch::kBilinear)
                                   .align_corners(false)
                                   .antialias(true));
  return image.dim() == 3 ? out.squeeze(0) : out;
}

void save_float_tiff(const fs::path& path, const torch::Tensor& array) {
  cv::Mat m = tensor_to_mat(array, CV_32F);
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  ensure_parent(path);
  // Uncompressed, since OpenCV stores float RGB as lossy LogLuv otherwise.
  const std::vector<int> params{cv::IMWRITE_TIFF_COMPRESSION, 1};
  if (!cv::imwrite(path.string(), m, params)) throw DataError("cannot write array " + path.string());
}

torch::Tensor load_float_tiff(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty() || m.depth() != CV_32F) throw DataError("cannot read float array " + path.string());
  if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  return mat_to_tensor(m);
}

torch::Tensor load_depth_png(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty() || m.depth() != CV_16U) throw DataError("cannot read 16-bit depth " + path.string());
  return mat_to_tensor(m) / 256.0;
}

void save_depth_png(const fs::path& path, const torch::Tensor& depth) {
  auto d = (depth.detach().clamp(0, 65535.0 / 256.0) * 256.0).round();
  cv::Mat m = tensor_to_mat(d, CV_16U);
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write depth " + path.string());
}

void save_disparity_preview(const fs::path& path, const torch::Tensor& disparity, int64_t height, int64_t width) {
  auto d = disparity.detach().to(torch::kFloat32);
  if (d.dim() == 3) d = d.unsqueeze(0);
  d = resize_image(d, height, width)[0];
  const auto lo = d.min();
  const auto hi = d.max();
  d = (d - lo) / (hi - lo).clamp_min(1e-12);
  cv::Mat gray = tensor_to_mat((d * 255.0).round(), CV_8U);
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_MAGMA);
  ensure_parent(path);
  if (!cv::imwrite(path.string(), color)) throw DataError("cannot write image " + path.string());
}

// --- splits and layouts ------------------------------------------------------------

std::vector<SplitEntry> read_split_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file " + path.string());
  std::vector<SplitEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::istringstream ss(line);
    SplitEntry e;
    std::string side;
    if (!(ss >> e.sequence >> e.frame)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected '<sequence> <frame> [side]'");
    }
    if (ss >> side) e.side = side[0];
    if (e.side != 'l' && e.side != 'r') {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": side must be l or r");
    }
    entries.push_back(e);
  }
  return entries;
}

TripletDataset::TripletDataset(fs::path root, DatasetFormat format, std::vector<SplitEntry> entries,
                               LoadOptions opts)
    : root_(std::move(root)), format_(format), entries_(std::move(entries)), opts_(opts) {}

fs::path TripletDataset::image_path(const std::string& sequence, int64_t frame, char side) const {
  std::ostringstream name;
  if (format_ == DatasetFormat::kKitti) {
    name << std::setw(10) << std::setfill('0') << frame << ".png";
    return root_ / sequence / (side == 'r' ? "image_03" : "image_02") / "data" / name.str();
  }
  name << std::setw(6) << std::setfill('0') << frame << ".png";
  return root_ / sequence / "rgb" / name.str();
}

fs::path TripletDataset::depth_path(const std::string& sequence, int64_t frame, char side) const {
  std::ostringstream name;
  if (format_ == DatasetFormat::kKitti) {
    name << std::setw(10) << std::setfill('0') << frame << ".png";
    return root_ / sequence / "proj_depth" / "groundtruth" / (side == 'r' ? "image_03" : "image_02") /
           name.str();
  }
  name << std::setw(6) << std::setfill('0') << frame << ".png";
  return root_ / sequence / "depth" / name.str();
}

std::optional<Intrinsics> TripletDataset::intrinsics_for(const std::string& sequence) const {
  std::optional<Intrinsics> k;
  if (format_ == DatasetFormat::kDdad) {
    const auto path = root_ / sequence / "calibration.json";
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed calibration " + path.string());
    try {
      k = Intrinsics{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                     j.at("cy").get<double>(), j.at("width").get<int64_t>(), j.at("height").get<int64_t>()};
    } catch (const nlohmann::json::exception& e) {
      throw DataError("calibration " + path.string() + ": " + e.what());
    }
  } else {
    const auto date = fs::path(sequence).parent_path();
    const auto path = root_ / date / "calib_cam_to_cam.txt";
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path);
    std::string line;
    std::vector<double> p;
    std::vector<double> s;
    while (std::getline(in, line)) {
      auto read = [&](const std::string& key, std::vector<double>& out) {
        if (line.rfind(key + ":", 0) != 0) return;
        std::istringstream ss(line.substr(key.size() + 1));
        double v;
        while (ss >> v) out.push_back(v);
      };
      read("P_rect_02", p);
      read("S_rect_02", s);
    }
    if (p.size() != 12 || s.size() != 2) throw DataError("incomplete camera calibration " + path.string());
    k = Intrinsics{p[0], p[5], p[2], p[6], static_cast<int64_t>(s[0]), static_cast<int64_t>(s[1])};
  }
  return geometry::scale_intrinsics(*k, static_cast<double>(opts_.width) / k->width,
                                    static_cast<double>(opts_.height) / k->height);
}

ImageTriplet TripletDataset::get(size_t index) const {
  const auto& e = entries_.at(index);
  auto load = [&](int64_t frame, bool required) -> torch::Tensor {
    const auto path = image_path(e.sequence, frame, e.side);
    if (!fs::exists(path)) {
      if (required) throw DataError("missing frame " + path.string());
      return {};
    }
    return resize_image(load_image(path), opts_.height, opts_.width);
  };
  ImageTriplet t;
  t.sequence = e.sequence;
  t.frame = e.frame;
  t.center = load(e.frame, true);
  t.prev = load(e.frame - 1, opts_.require_neighbors);
  t.next = load(e.frame + 1, opts_.require_neighbors);
  t.k = intrinsics_for(e.sequence);
  if (opts_.load_depth) {
    const auto path = depth_path(e.sequence, e.frame, e.side);
    if (!fs::exists(path)) throw DataError("missing ground-truth depth " + path.string());
    t.gt_depth = load_depth_png(path);
  }
  if (format_ == DatasetFormat::kDdad) {
    const auto poses = root_ / e.sequence / "poses.txt";
    if (fs::exists(poses)) {
      std::ifstream in(poses);
      std::string line;
      for (int64_t i = 0; std::getline(in, line); ++i) {
        if (i != e.frame) continue;
        std::istringstream ss(line);
        RigidTransform p;
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) ss >> p.rotation[r * 3 + c];
          ss >> p.translation[r];
        }
        if (ss) t.gt_pose = p;
        break;
      }
    }
  }
  return t;
}

std::string TripletDataset::fingerprint() const {
  std::ostringstream s;
  s << to_string(format_) << '\n';
  for (const auto& e : entries_) {
    const auto p = image_path(e.sequence, e.frame, e.side);
    std::error_code ec;
    const auto size = fs::file_size(p, ec);
    s << e.sequence << ' ' << e.frame << ' ' << e.side << ' ' << (ec ? 0 : size) << '\n';
  }
  return sha256_hex(s.str());
}

namespace {

std::vector<SplitEntry> enumerate_layout(const fs::path& root, DatasetFormat format, bool require_neighbors) {
  std::vector<SplitEntry> entries;
  if (!fs::is_directory(root)) throw DataError("dataset root does not exist: " + root.string());
  std::map<std::string, std::vector<int64_t>> frames;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file() || it->path().extension() != ".png") continue;
    const auto dir = it->path().parent_path();
    fs::path seq_dir;
    if (format == DatasetFormat::kKitti) {
      if (dir.filename() != "data" || dir.parent_path().filename() != "image_02") continue;
      seq_dir = dir.parent_path().parent_path();
    } else {
      if (dir.filename() != "rgb") continue;
      seq_dir = dir.parent_path();
    }
    const auto stem = it->path().stem().string();
    if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
    frames[fs::relative(seq_dir, root).generic_string()].push_back(std::stoll(stem));
  }
  for (auto& [seq, ids] : frames) {
    std::sort(ids.begin(), ids.end());
    const std::set<int64_t> present(ids.begin(), ids.end());
    for (auto id : ids) {
      if (require_neighbors && (!present.count(id - 1) || !present.count(id + 1))) continue;
      entries.push_back({seq, id, 'l'});
    }
  }
  return entries;
}

}  // namespace

TripletDataset load_dataset(const fs::path& root, DatasetFormat format,
                            const std::optional<fs::path>& split_file, const LoadOptions& opts) {
  std::vector<SplitEntry> entries =
      split_file ? read_split_file(*split_file) : enumerate_layout(root, format, opts.require_neighbors);
  TripletDataset ds(root, format, entries, opts);
  // Fail early and name the file rather than at first access.
  for (size_t i = 0; i < ds.size(); ++i) {
    const auto& e = entries[i];
    std::vector<int64_t> needed{e.frame};
    if (opts.require_neighbors) {
      needed.push_back(e.frame - 1);
      needed.push_back(e.frame + 1);
    }
    for (auto f : needed) {
      std::ostringstream name;
      fs::path p;
      if (format == DatasetFormat::kKitti) {
        name << std::setw(10) << std::setfill('0') << f << ".png";
        p = root / e.sequence / (e.side == 'r' ? "image_03" : "image_02") / "data" / name.str();
      } else {
        name << std::setw(6) << std::setfill('0') << f << ".png";
        p = root / e.sequence / "rgb" / name.str();
      }
      if (!fs::exists(p)) throw DataError("missing frame " + p.string());
    }
  }
  return ds;
}

Batch collate(const std::vector<ImageTriplet>& items, bool allow_partial) {
  if (items.empty()) throw ShapeError("cannot collate an empty batch");
  std::vector<torch::Tensor> prev, center, next, ks, depths;
  bool all_k = true;
  bool all_depth = true;
  for (const auto& t : items) {
    if (t.has_prev()) prev.push_back(t.prev);
    if (t.has_next()) next.push_back(t.next);
    center.push_back(t.center);
    if (t.k) {
      ks.push_back(geometry::intrinsics_to_matrix(*t.k).to(torch::kFloat32));
    } else {
      all_k = false;
    }
    if (t.gt_depth.defined()) {
      depths.push_back(t.gt_depth);
    } else {
      all_depth = false;
    }
  }
  const auto n = items.size();
  auto stack_or_none = [&](const std::vector<torch::Tensor>& v, const char* which) -> torch::Tensor {
    if (v.size() == n) return torch::stack(v);
    if (allow_partial && v.empty()) return {};
    throw ShapeError(std::string("batch has items without a ") + which + " frame");
  };
  Batch b;
  b.center = torch::stack(center);
  b.prev = stack_or_none(prev, "previous");
  b.next = stack_or_none(next, "next");
  if (!b.prev.defined() && !b.next.defined()) throw ShapeError("a triplet needs at least one neighbour");
  if (all_k) b.k = torch::stack(ks);
  if (all_depth) b.gt_depth = torch::stack(depths);
  return b;
}

Batch flip_horizontal(const Batch& b) {
  auto flip = [](const torch::Tensor& t) { return t.defined() ? t.flip({3}) : t; };
  Batch out{flip(b.prev), flip(b.center), flip(b.next), b.k, flip(b.gt_depth)};
  if (b.k.defined()) {
    out.k = b.k.clone();
    const auto w = static_cast<double>(b.center.size(3));
    out.k.select(1, 0).select(1, 2).copy_((w - 1.0) - b.k.select(1, 0).select(1, 2));
  }
  return out;
}

std::string InMemoryTriplets::fingerprint() const {
  std::ostringstream s;
  s << "memory\n";
  for (const auto& t : items_) {
    const auto c = t.center.to(torch::kFloat64);
    s << t.sequence << ' ' << t.frame << ' ' << std::setprecision(17) << c.sum().item<double>() << ' '
      << (c * c).sum().item<double>() << '\n';
  }
  return sha256_hex(s.str());
}

// --- synthetic scenes -------------------------------------------------------------

namespace {

struct Wave {
  double fa, fb, phase, amp;
};

// Non-periodic texture: hashed value noise over three lattice sizes plus a few
// low-frequency colour waves. Periodic patterns would let wrong warps match.
struct PlaneTexture {
  std::array<std::vector<Wave>, 3> waves;
  std::array<double, 3> base{};
  uint64_t key = 0;

  static constexpr std::array<double, 3> kCells{0.15, 0.4, 1.1};
  static constexpr std::array<double, 3> kAmps{0.12, 0.12, 0.1};

  static PlaneTexture random(std::mt19937_64& rng) {
    PlaneTexture t;
    std::uniform_real_distribution<double> freq(0.15, 1.2), phase(0.0, 2 * M_PI), base(0.35, 0.65),
        angle(0.0, M_PI);
    for (int c = 0; c < 3; ++c) {
      t.base[c] = base(rng);
      for (int i = 0; i < 2; ++i) {
        const double f = freq(rng);
        const double a = angle(rng);
        t.waves[c].push_back({f * std::cos(a), f * std::sin(a), phase(rng), 0.06});
      }
    }
    t.key = rng();
    return t;
  }

  // Lattice value in [-1, 1].
  double lattice(int64_t i, int64_t j, uint64_t salt) const {
    uint64_t z = key ^ (static_cast<uint64_t>(i) * 0x9E3779B97F4A7C15ULL) ^
                 (static_cast<uint64_t>(j) * 0xC2B2AE3D27D4EB4FULL) ^ (salt * 0x165667B19E3779F9ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  }

  double noise(double a, double b, double cell, uint64_t salt) const {
    const double x = a / cell, y = b / cell;
    const auto i = static_cast<int64_t>(std::floor(x));
    const auto j = static_cast<int64_t>(std::floor(y));
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double u = smooth(x - static_cast<double>(i)), v = smooth(y - static_cast<double>(j));
    const double top = (1 - u) * lattice(i, j, salt) + u * lattice(i + 1, j, salt);
    const double bottom = (1 - u) * lattice(i, j + 1, salt) + u * lattice(i + 1, j + 1, salt);
    return (1 - v) * top + v * bottom;
  }

  std::array<double, 3> sample(double a, double b) const {
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) {
      double v = base[c];
      for (size_t o = 0; o < kCells.size(); ++o) {
        // Octaves share a luminance component so channels stay correlated.
        v += kAmps[o] * (0.6 * noise(a, b, kCells[o], 3 * o) + 0.4 * noise(a, b, kCells[o], 3 * o + 1 + c));
      }
      for (const auto& w : waves[c]) v += w.amp * std::sin(2 * M_PI * (w.fa * a + w.fb * b) + w.phase);
      out[c] = std::clamp(v, 0.0, 1.0);
    }
    return out;
  }
};

}  // namespace

SyntheticSequence render_synthetic_sequence(const SyntheticOptions& opts) {
  if (opts.height <= 0 || opts.width <= 0 || opts.num_frames < 3 || opts.supersample < 1) {
    throw ConfigError("synthetic", "need positive image size, >= 3 frames and supersample >= 1");
  }
  std::mt19937_64 rng(opts.seed);
  // floor, left wall, right wall, end wall
  std::array<PlaneTexture, 4> tex{PlaneTexture::random(rng), PlaneTexture::random(rng),
                                  PlaneTexture::random(rng), PlaneTexture::random(rng)};
  std::uniform_real_distribution<double> jitter(-0.5, 0.5);
  const double start_x = 0.3 * jitter(rng);

  SyntheticSequence seq;
  const double fx = opts.focal_ratio * static_cast<double>(opts.width);
  seq.k = Intrinsics{fx, fx, (opts.width - 1) / 2.0, (opts.height - 1) / 2.0, opts.width, opts.height};

  const int ss = opts.supersample;
  for (int64_t f = 0; f < opts.num_frames; ++f) {
    const double yaw = opts.yaw_rate * static_cast<double>(f);
    RigidTransform pose;  // camera-to-world, rotation about the y axis
    pose.rotation = {std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw)};
    double px = start_x;
    double pz = 0.0;
    for (int64_t i = 0; i < f; ++i) {
      const double y = opts.yaw_rate * static_cast<double>(i + 1);
      px += opts.speed * std::sin(y);
      pz += opts.speed * std::cos(y);
    }
    pose.translation = {px, 0.0, pz};

    auto image = torch::zeros({3, opts.height, opts.width}, torch::kFloat32);
    auto depth = torch::zeros({1, opts.height, opts.width}, torch::kFloat32);
    auto ia = image.accessor<float, 3>();
    auto da = depth.accessor<float, 3>();
    for (int64_t v = 0; v < opts.height; ++v) {
      for (int64_t u = 0; u < opts.width; ++u) {
        std::array<double, 3> acc{};
        double center_depth = 0.0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const double uu = static_cast<double>(u) + (sx + 0.5) / ss - 0.5;
            const double vv = static_cast<double>(v) + (sy + 0.5) / ss - 0.5;
            const std::array<double, 3> ray_cam{(uu - seq.k.cx) / seq.k.fx, (vv - seq.k.cy) / seq.k.fy, 1.0};
            std::array<double, 3> ray{};
            for (int r = 0; r < 3; ++r) {
              ray[r] = pose.rotation[r * 3] * ray_cam[0] + pose.rotation[r * 3 + 1] * ray_cam[1] +
                       pose.rotation[r * 3 + 2] * ray_cam[2];
            }
            // Ray parameter t equals camera-frame depth because ray_cam.z == 1.
            double best = std::numeric_limits<double>::infinity();
            int plane = -1;
            auto consider = [&](double t, int id) {
              if (t > 1e-6 && t < best) {
                best = t;
                plane = id;
              }
            };
            if (ray[1] > 0) consider(opts.camera_height / ray[1], 0);
            if (ray[0] < 0) consider((-opts.half_width - px) / ray[0], 1);
            if (ray[0] > 0) consider((opts.half_width - px) / ray[0], 2);
            if (ray[2] > 0) consider((opts.end_distance - pz) / ray[2], 3);
            const std::array<double, 3> hit{px + best * ray[0], best * ray[1], pz + best * ray[2]};
            std::array<double, 3> c{};
            switch (plane) {
              case 0: c = tex[0].sample(hit[0], hit[2]); break;
              case 1: c = tex[1].sample(hit[2], hit[1]); break;
              case 2: c = tex[2].sample(hit[2], hit[1]); break;
              default: c = tex[3].sample(hit[0], hit[1]); break;
            }
            for (int k = 0; k < 3; ++k) acc[k] += c[k];
            if (sy == ss / 2 && sx == ss / 2) center_depth = best;
          }
        }
        // Depth at the exact pixel centre.
        {
          const std::array<double, 3> ray_cam{(u - seq.k.cx) / seq.k.fx, (v - seq.k.cy) / seq.k.fy, 1.0};
          std::array<double, 3> ray{};
          for (int r = 0; r < 3; ++r) {
            ray[r] = pose.rotation[r * 3] * ray_cam[0] + pose.rotation[r * 3 + 1] * ray_cam[1] +
                     pose.rotation[r * 3 + 2] * ray_cam[2];
          }
          double best = std::numeric_limits<double>::infinity();
          if (ray[1] > 0) best = std::min(best, opts.camera_height / ray[1]);
          if (ray[0] < 0) best = std::min(best, (-opts.half_width - px) / ray[0]);
          if (ray[0] > 0) best = std::min(best, (opts.half_width - px) / ray[0]);
          if (ray[2] > 0) best = std::min(best, (opts.end_distance - pz) / ray[2]);
          center_depth = best;
        }
        for (int k = 0; k < 3; ++k) ia[k][v][u] = static_cast<float>(acc[k] / (ss * ss));
        da[0][v][u] = static_cast<float>(center_depth);
      }
    }
    seq.images.push_back(image);
    seq.depths.push_back(depth);
    seq.poses.push_back(pose);
  }
  return seq;
}

std::vector<ImageTriplet> synthetic_triplets(const SyntheticSequence& seq, const std::string& name) {
  std::vector<ImageTriplet> out;
  for (size_t i = 1; i + 1 < seq.images.size(); ++i) {
    ImageTriplet t;
    t.prev = seq.images[i - 1];
    t.center = seq.images[i];
    t.next = seq.images[i + 1];
    t.k = seq.k;
    t.gt_depth = seq.depths[i];
    t.gt_pose = seq.poses[i];
    t.sequence = name;
    t.frame = static_cast<int64_t>(i);
    out.push_back(std::move(t));
  }
  return out;
}

void write_synthetic_sequence(const fs::path& root, const std::string& name, const SyntheticSequence& seq) {
  const auto dir = root / name;
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  for (size_t i = 0; i < seq.images.size(); ++i) {
    std::ostringstream fn;
    fn << std::setw(6) << std::setfill('0') << i << ".png";
    save_image_png(dir / "rgb" / fn.str(), seq.images[i]);
    save_depth_png(dir / "depth" / fn.str(), seq.depths[i]);
  }
  nlohmann::json calib{{"fx", seq.k.fx}, {"fy", seq.k.fy}, {"cx", seq.k.cx},
                       {"cy", seq.k.cy}, {"width", seq.k.width}, {"height", seq.k.height}};
  std::ofstream(dir / "calibration.json") << calib.dump(2) << '\n';
  std::ofstream poses(dir / "poses.txt");
  poses << std::setprecision(17);
  for (const auto& p : seq.poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) poses << p.rotation[r * 3 + c] << ' ';
      poses << p.translation[r] << (r == 2 ? '\n' : ' ');
    }
  }
}

}  // namespace monosfm::data
