#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amsrc/flow.hpp"
#include "amsrc/image.hpp"
#include "amsrc/tensor.hpp"

namespace amsrc {

struct VideoClip {
  std::string id;
  std::vector<Image> frames;  // shared HxW, values in [0,1]
  double fps = 25.0;          // informational

  int height() const { return frames.empty() ? 0 : static_cast<int>(frames[0].rows()); }
  int width() const { return frames.empty() ? 0 : static_cast<int>(frames[0].cols()); }
};

struct RoIBox {
  int frame = 0;
  int x = 0, y = 0, w = 0, h = 0;
  int object_id = 0;
};

struct FrameLabel {
  int frame = 0;
  int label = 0;  // 0 normal, 1 anomalous
};

/// Spatial-temporal cube: (t+1) patch slices from the same region of the
/// current frame and its t predecessors, plus the t flow fields between
/// consecutive window frames. Slices are row-major patch*patch planes; the
/// flow cube interleaves per step as (u plane, v plane).
struct Stc {
  int window = 4;  // t
  int patch = 32;
  ArrayX<float> frame_cube;  // (t+1) * patch * patch
  ArrayX<float> flow_cube;   // t * 2 * patch * patch
  std::string clip_id;
  int target_frame = 0;
  int object_id = 0;
};

/// Pixel normalization between 8-bit storage and the [0,1] float domain.
inline float normalize_pixel(std::uint8_t v) { return pixel_to_float(v); }
inline std::uint8_t denormalize_pixel(float v) { return float_to_pixel(v); }

/// Crops the box region from the current frame and its t predecessors,
/// resizes each crop to patch x patch (corner-aligned bilinear), and does the
/// same for the t flow fields between consecutive window frames. Flow
/// components are rescaled by the spatial resize ratio (patch/w, patch/h).
Stc build_stc(const VideoClip& clip, const std::vector<FlowField>& flows, const RoIBox& box,
              int t, int patch = 32);

struct ClipData {
  VideoClip clip;
  std::vector<RoIBox> boxes;
  std::vector<FrameLabel> labels;
  std::vector<FlowField> flows;  // flows[k] maps frame k -> k+1

  std::vector<RoIBox> boxes_at(int frame) const;
  int label_at(int frame) const;
};

struct Dataset {
  std::vector<ClipData> train;
  std::vector<ClipData> test;
};

enum class FlowSource { Auto, Files, BlockMatching };

/// Loads `<root>/{train,test}/<clip>/` directories: zero-padded PNG frames
/// under frames/, boxes.csv, labels.csv, and flow/*.amfl. With
/// FlowSource::Auto, missing flow files fall back to block matching.
Dataset load_dataset(const std::filesystem::path& root, FlowSource source = FlowSource::Auto);
ClipData load_clip(const std::filesystem::path& clip_dir, FlowSource source = FlowSource::Auto);

void write_boxes_csv(const std::filesystem::path& path, const std::vector<RoIBox>& boxes);
std::vector<RoIBox> read_boxes_csv(const std::filesystem::path& path);
void write_labels_csv(const std::filesystem::path& path, const std::vector<FrameLabel>& labels);
std::vector<FrameLabel> read_labels_csv(const std::filesystem::path& path);

/// Every STC extractable from the clip: one per (frame, box) pair with
/// frame >= t. Earlier frames are skipped, not padded.
std::vector<Stc> extract_stcs(const ClipData& clip, int t, int patch = 32);

}  // namespace amsrc
