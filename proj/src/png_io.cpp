#include "amsrc/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

namespace amsrc {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png_gray8(const std::string& path, const Image& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h <= 0 || w <= 0) throw InvalidInput("write_png_gray8: empty image");

  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(h) * w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) bytes[static_cast<std::size_t>(i) * w + j] = float_to_pixel(img(i, j));

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open for writing: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // Fixed filter strategy keeps the byte stream reproducible run to run.
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_write_info(png, info);
  for (int i = 0; i < h; ++i)
    png_write_row(png, reinterpret_cast<png_bytep>(bytes.data() + static_cast<std::size_t>(i) * w));
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

Image read_png_gray(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open for reading: " + path);

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw IoError("not a PNG file: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize everything to 8-bit RGB or gray.
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);

  png_read_update_info(png, info);
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported channel count " + std::to_string(channels) + " in " + path);
  }

  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  Image img(h, w);
  for (int i = 0; i < h; ++i) {
    png_read_row(png, reinterpret_cast<png_bytep>(row.data()), nullptr);
    for (int j = 0; j < w; ++j) {
      if (channels == 1) {
        img(i, j) = pixel_to_float(row[static_cast<std::size_t>(j)]);
      } else {
        const std::size_t o = static_cast<std::size_t>(j) * 3;
        img(i, j) = luminance(pixel_to_float(row[o]), pixel_to_float(row[o + 1]),
                              pixel_to_float(row[o + 2]));
      }
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace amsrc
