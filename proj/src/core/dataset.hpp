#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"

// Dataset layouts
// ---------------
// kitti:  <root>/<sequence>/image_02/data/<frame:010d>.png     (side "l"; "r" -> image_03)
//         <root>/<sequence>/proj_depth/groundtruth/image_02/<frame:010d>.png   uint16, metres*256
//         <root>/<date>/calib_cam_to_cam.txt with P_rect_02 / S_rect_02, where the
//         sequence is "<date>/<drive>"; optional.
//         split lines: "<sequence> <frame> [l|r]"
// ddad:   <root>/<scene>/rgb/<frame:06d>.png
//         <root>/<scene>/depth/<frame:06d>.png                     uint16, metres*256
//         <root>/<scene>/calibration.json  {"fx","fy","cx","cy","width","height"}
//         <root>/<scene>/poses.txt          optional, 12 numbers (3x4 camera-to-world) per frame
//         split lines: "<scene> <frame>"
// Without a split file every frame that has both neighbours becomes a triplet
// centre, sequences and frames in lexicographic/numeric order.

namespace monosfm::data {

namespace fs = std::filesystem;

enum class DatasetFormat { kKitti, kDdad };

DatasetFormat dataset_format_from_string(const std::string& s);
std::string to_string(DatasetFormat f);

// Frames {I-1, I0, I1}; neighbours may be undefined for boundary frames in
// evaluation sets. Images are [3,H,W] float in [0,1]; depth is [1,H,W] with 0
// where no ground truth exists.
struct ImageTriplet {
  torch::Tensor prev, center, next;
  std::optional<geometry::Intrinsics> k;
  torch::Tensor gt_depth;
  std::optional<geometry::RigidTransform> gt_pose;  // camera-to-world of the centre frame
  std::string sequence;
  int64_t frame = 0;

  bool has_prev() const { return prev.defined(); }
  bool has_next() const { return next.defined(); }
};

struct SplitEntry {
  std::string sequence;
  int64_t frame = 0;
  char side = 'l';
};

std::vector<SplitEntry> read_split_file(const fs::path& path);

struct LoadOptions {
  int64_t height = 192;
  int64_t width = 640;
  bool require_neighbors = true;  // training triplets need both neighbours
  bool load_depth = false;
};

// Random access to triplets, on disk or in memory.
class TripletSource {
 public:
  virtual ~TripletSource() = default;
  virtual size_t size() const = 0;
  virtual ImageTriplet get(size_t index) const = 0;
  virtual std::string fingerprint() const = 0;
  bool empty() const { return size() == 0; }
};

class InMemoryTriplets : public TripletSource {
 public:
  InMemoryTriplets() = default;
  explicit InMemoryTriplets(std::vector<ImageTriplet> items) : items_(std::move(items)) {}
  size_t size() const override { return items_.size(); }
  ImageTriplet get(size_t index) const override { return items_.at(index); }
  std::string fingerprint() const override;

 private:
  std::vector<ImageTriplet> items_;
};

// Index over a dataset on disk; frames are decoded on access.
class TripletDataset : public TripletSource {
 public:
  TripletDataset() = default;
  TripletDataset(fs::path root, DatasetFormat format, std::vector<SplitEntry> entries, LoadOptions opts);

  size_t size() const override { return entries_.size(); }
  ImageTriplet get(size_t index) const override;
  const std::vector<SplitEntry>& entries() const { return entries_; }
  const LoadOptions& options() const { return opts_; }
  DatasetFormat format() const { return format_; }
  // Stable hash of the entry list and file sizes.
  std::string fingerprint() const override;

 private:
  fs::path image_path(const std::string& sequence, int64_t frame, char side) const;
  fs::path depth_path(const std::string& sequence, int64_t frame, char side) const;
  std::optional<geometry::Intrinsics> intrinsics_for(const std::string& sequence) const;

  fs::path root_;
  DatasetFormat format_ = DatasetFormat::kDdad;
  std::vector<SplitEntry> entries_;
  LoadOptions opts_;
};

// Throws DataError naming the first missing file.
TripletDataset load_dataset(const fs::path& root, DatasetFormat format,
                            const std::optional<fs::path>& split_file, const LoadOptions& opts);

// --- image files ------------------------------------------------------------------

torch::Tensor load_image(const fs::path& path);  // [3,H,W] RGB float in [0,1]
void save_image_png(const fs::path& path, const torch::Tensor& image);  // [3,H,W] or [1,H,W]
torch::Tensor resize_image(const torch::Tensor& image, int64_t height, int64_t width);

// Lossless float32 storage as TIFF. Accepts [C,H,W] with C in {1,3} or [H,W].
void save_float_tiff(const fs::path& path, const torch::Tensor& array);
torch::Tensor load_float_tiff(const fs::path& path);

torch::Tensor load_depth_png(const fs::path& path);   // uint16 / 256 -> [1,H,W]
void save_depth_png(const fs::path& path, const torch::Tensor& depth);

// Colourised preview of a disparity map [1,h,w] (min-max normalised), resized to height x width.
void save_disparity_preview(const fs::path& path, const torch::Tensor& disparity, int64_t height, int64_t width);

// --- batching ---------------------------------------------------------------------

struct Batch {
  torch::Tensor prev, center, next;  // [B,3,H,W]; prev/next undefined when missing
  torch::Tensor k;                   // [B,3,3] float, undefined when any element lacks K
  torch::Tensor gt_depth;            // [B,1,H,W] or undefined
};

// With `allow_partial`, a neighbour missing in every item is left undefined;
// otherwise all items need both neighbours.
Batch collate(const std::vector<ImageTriplet>& items, bool allow_partial = false);

// Horizontal mirror of a batch; principal points move to W-1-cx.
Batch flip_horizontal(const Batch& b);

// --- synthetic scenes -------------------------------------------------------------

// Camera dolly through a textured corridor (floor, two side walls, end wall).
struct SyntheticOptions {
  int64_t height = 64;
  int64_t width = 192;
  int64_t num_frames = 52;
  uint64_t seed = 0;
  double focal_ratio = 0.58;     // fx / W and fy / (W * aspect)
  double speed = 0.5;            // metres per frame along the optical axis
  double yaw_rate = 0.0;         // radians per frame
  double camera_height = 1.5;
  double half_width = 4.0;       // corridor half width
  double end_distance = 60.0;    // end wall position along z
  int supersample = 2;
};

struct SyntheticSequence {
  std::vector<torch::Tensor> images;  // [3,H,W]
  std::vector<torch::Tensor> depths;  // [1,H,W]
  std::vector<geometry::RigidTransform> poses;  // camera-to-world
  geometry::Intrinsics k;
};

SyntheticSequence render_synthetic_sequence(const SyntheticOptions& opts);

// Consecutive triplets of a rendered sequence (centre frames 1..n-2).
std::vector<ImageTriplet> synthetic_triplets(const SyntheticSequence& seq, const std::string& name);

// Writes the sequence in the ddad layout under <root>/<name>.
void write_synthetic_sequence(const fs::path& root, const std::string& name, const SyntheticSequence& seq);

}  // namespace monosfm::data
