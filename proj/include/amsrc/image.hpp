#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "amsrc/errors.hpp"

namespace amsrc {

/// Grayscale image, row-major, values in [0,1].
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline float pixel_to_float(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline std::uint8_t float_to_pixel(float v) {
  const float r = std::round(v * 255.0f);
  return static_cast<std::uint8_t>(r < 0.0f ? 0.0f : (r > 255.0f ? 255.0f : r));
}

inline float luminance(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;  // BT.601
}

inline Image crop(const Image& img, int x, int y, int w, int h) {
  if (w <= 0 || h <= 0 || x < 0 || y < 0 || x + w > img.cols() || y + h > img.rows())
    throw InvalidBox("crop " + std::to_string(x) + "," + std::to_string(y) + "," +
                     std::to_string(w) + "x" + std::to_string(h) + " outside " +
                     std::to_string(img.cols()) + "x" + std::to_string(img.rows()) + " frame");
  return img.block(y, x, h, w);
}

/// Bilinear resize with corner-aligned sampling: output corners map exactly
/// onto input corners, so a same-size resize is the identity.
inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
  const int in_h = static_cast<int>(img.rows());
  const int in_w = static_cast<int>(img.cols());
  if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0)
    throw InvalidInput("resize_bilinear: empty image");
  Image out(out_h, out_w);
  const double sy = out_h > 1 ? static_cast<double>(in_h - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(in_w - 1) / (out_w - 1) : 0.0;
  for (int i = 0; i < out_h; ++i) {
    const double fy = i * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = y0 + 1 < in_h ? y0 + 1 : in_h - 1;
    const float wy = static_cast<float>(fy - y0);
    for (int j = 0; j < out_w; ++j) {
      const double fx = j * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = x0 + 1 < in_w ? x0 + 1 : in_w - 1;
      const float wx = static_cast<float>(fx - x0);
      const float top = img(y0, x0) * (1.0f - wx) + img(y0, x1) * wx;
      const float bot = img(y1, x0) * (1.0f - wx) + img(y1, x1) * wx;
      out(i, j) = top * (1.0f - wy) + bot * wy;
    }
  }
  return out;
}

}  // namespace amsrc
