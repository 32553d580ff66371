#pragma once

#include <string>

#include "amsrc/image.hpp"

namespace amsrc {

/// Writes an 8-bit grayscale PNG.
void write_png_gray8(const std::string& path, const Image& img);

/// Reads a PNG as a [0,1] grayscale image. Gray input maps byte/255 exactly;
/// color input is converted by BT.601 luminance.
Image read_png_gray(const std::string& path);

}  // namespace amsrc
