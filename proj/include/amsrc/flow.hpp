#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "amsrc/image.hpp"

namespace amsrc {

/// Per-pixel displacement from frame k to k+1, in pixels per frame.
struct FlowField {
  Image u;  // horizontal component
  Image v;  // vertical component

  int height() const { return static_cast<int>(u.rows()); }
  int width() const { return static_cast<int>(u.cols()); }
};

// AMFL binary format: magic "AMFL", u32 height, u32 width (little-endian),
// then height*width pairs of f32 (u, v) interleaved per pixel, row-major.
void save_flow(const std::string& path, const FlowField& flow);
FlowField load_flow(const std::string& path);

/// Integer-displacement block matching: per block, the shift within
/// [-radius, radius]^2 minimizing the sum of absolute differences. Ties pick
/// the smallest displacement magnitude, then lexicographic (u, v). Block
/// displacements are expanded to per-pixel fields by nearest assignment.
FlowField block_matching_flow(const Image& frame_a, const Image& frame_b, int block = 8,
                              int radius = 4);

/// Interchangeable flow sources: precomputed files (including synthetic
/// ground truth) or the block-matching estimator.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  /// Flow from frame `index` to frame `index`+1.
  virtual FlowField at(int index) const = 0;
  virtual int count() const = 0;
};

class FileFlowProvider : public FlowProvider {
 public:
  explicit FileFlowProvider(std::filesystem::path flow_dir);
  FlowField at(int index) const override;
  int count() const override { return static_cast<int>(files_.size()); }

 private:
  std::vector<std::filesystem::path> files_;
};

class BlockMatchingFlowProvider : public FlowProvider {
 public:
  BlockMatchingFlowProvider(const std::vector<Image>* frames, int block = 8, int radius = 4)
      : frames_(frames), block_(block), radius_(radius) {}
  FlowField at(int index) const override;
  int count() const override { return static_cast<int>(frames_->size()) - 1; }

 private:
  const std::vector<Image>* frames_;
  int block_;
  int radius_;
};

}  // namespace amsrc
