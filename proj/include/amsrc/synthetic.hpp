#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amsrc/dataset.hpp"
#include "amsrc/rng.hpp"

namespace amsrc {

// Seeded synthetic surveillance clips: circular sprites translating at
// 1-2 px/frame over a textured static background. Test clips additionally
// contain one anomalous sprite, either a circle at >= 5 px/frame (motion
// anomaly) or a square at normal speed (appearance anomaly), active over a
// contiguous frame window. Flow fields are analytic: the sprite displacement
// inside its mask, zero elsewhere.

struct GenConfig {
  int train_clips = 8;
  int test_clips = 4;
  int frames_per_clip = 120;
  int height = 64;
  int width = 64;
  int sprites_per_clip = 2;  // normal sprites per clip

  void validate() const;
};

struct SpriteSpec {
  bool square = false;
  bool anomalous = false;
  int half = 5;  // radius (circle) or half side (square)
  float intensity = 0.9f;
  int x = 10, y = 10;  // initial center
  int vx = 1, vy = 0;  // px/frame; reflected at frame borders
  int active_begin = 0;
  int active_end = -1;  // exclusive; -1 means the whole clip
};

/// Deterministic renderer: frames (8-bit quantized), tight per-sprite boxes,
/// exact flow fields, and per-frame labels (1 iff an anomalous sprite is
/// visible). Sprites are drawn in list order; later sprites overwrite.
ClipData render_synthetic_clip(const Image& background, const std::vector<SpriteSpec>& sprites,
                               int frames, const std::string& id);

/// Smooth random texture in [0.25, 0.6].
Image make_background(Rng& rng, int height, int width);

/// One random clip; test-split clips carry one anomalous sprite whose kind
/// alternates with clip_index (even: fast circle, odd: square).
ClipData make_synthetic_clip(Rng& rng, const GenConfig& config, bool test_split, int clip_index,
                             const std::string& id);

void write_clip(const std::filesystem::path& clip_dir, const ClipData& data);

struct GenSummary {
  int train_clips = 0;
  int test_clips = 0;
  int frames = 0;
  int boxes = 0;
  int anomalous_frames = 0;
};

/// Writes the full dataset tree under out_dir (train/ and test/ splits).
/// Byte-identical for identical (config, seed).
GenSummary generate_synthetic(const GenConfig& config, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

}  // namespace amsrc
