#include "amsrc/flow.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "amsrc/errors.hpp"

namespace amsrc {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'F', 'L'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  std::memcpy(&v, p, 4);  // little-endian host assumed (x86/arm64-le)
  return v;
}

}  // namespace

void save_flow(const std::string& path, const FlowField& flow) {
  const int h = flow.height();
  const int w = flow.width();
  if (h <= 0 || w <= 0 || flow.v.rows() != h || flow.v.cols() != w)
    throw InvalidInput("save_flow: inconsistent u/v shapes");
  std::string buf;
  buf.reserve(12 + static_cast<std::size_t>(h) * w * 8);
  buf.append(kMagic, 4);
  put_u32(buf, static_cast<std::uint32_t>(h));
  put_u32(buf, static_cast<std::uint32_t>(w));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      float uv[2] = {flow.u(i, j), flow.v(i, j)};
      buf.append(reinterpret_cast<const char*>(uv), 8);
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path);
}

FlowField load_flow(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw BadMagic("not an AMFL file: " + path);
  if (buf.size() < 12) throw TruncatedFile("AMFL header incomplete: " + path);
  const std::uint32_t h = get_u32(buf.data() + 4);
  const std::uint32_t w = get_u32(buf.data() + 8);
  if (h == 0 || w == 0) throw TruncatedFile("AMFL empty dimensions: " + path);
  const std::size_t payload = static_cast<std::size_t>(h) * w * 8;
  if (buf.size() < 12 + payload)
    throw TruncatedFile("AMFL payload short: " + path + " (" + std::to_string(buf.size() - 12) +
                        " of " + std::to_string(payload) + " bytes)");

  FlowField flow;
  flow.u.resize(h, w);
  flow.v.resize(h, w);
  const char* p = buf.data() + 12;
  for (std::uint32_t i = 0; i < h; ++i) {
    for (std::uint32_t j = 0; j < w; ++j) {
      float uv[2];
      std::memcpy(uv, p, 8);
      p += 8;
      flow.u(i, j) = uv[0];
      flow.v(i, j) = uv[1];
    }
  }
  return flow;
}

FlowField block_matching_flow(const Image& frame_a, const Image& frame_b, int block, int radius) {
  const int h = static_cast<int>(frame_a.rows());
  const int w = static_cast<int>(frame_a.cols());
  if (frame_b.rows() != h || frame_b.cols() != w)
    throw InvalidInput("block_matching_flow: frame shapes differ");
  if (block <= 0 || radius < 0 || h < block || w < block)
    throw InvalidInput("block_matching_flow: frames smaller than block size");

  FlowField flow;
  flow.u = Image::Zero(h, w);
  flow.v = Image::Zero(h, w);

  for (int by = 0; by < h; by += block) {
    const int bh = std::min(block, h - by);
    for (int bx = 0; bx < w; bx += block) {
      const int bw = std::min(block, w - bx);
      float best_sad = 0.0f;
      int best_du = 0, best_dv = 0;
      long best_mag = 0;
      bool first = true;
      for (int dv = -radius; dv <= radius; ++dv) {
        const int sy = by + dv;
        if (sy < 0 || sy + bh > h) continue;
        for (int du = -radius; du <= radius; ++du) {
          const int sx = bx + du;
          if (sx < 0 || sx + bw > w) continue;
          const float sad =
              (frame_a.block(by, bx, bh, bw) - frame_b.block(sy, sx, bh, bw)).abs().sum();
          const long mag = static_cast<long>(du) * du + static_cast<long>(dv) * dv;
          const bool better =
              first || sad < best_sad ||
              (sad == best_sad &&
               (mag < best_mag || (mag == best_mag && (du < best_du || (du == best_du && dv < best_dv)))));
          if (better) {
            best_sad = sad;
            best_du = du;
            best_dv = dv;
            best_mag = mag;
            first = false;
          }
        }
      }
      flow.u.block(by, bx, bh, bw).setConstant(static_cast<float>(best_du));
      flow.v.block(by, bx, bh, bw).setConstant(static_cast<float>(best_dv));
    }
  }
  return flow;
}

FileFlowProvider::FileFlowProvider(std::filesystem::path flow_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(flow_dir)) throw IoError("flow directory missing: " + flow_dir.string());
  for (const auto& e : fs::directory_iterator(flow_dir))
    if (e.is_regular_file() && e.path().extension() == ".amfl") files_.push_back(e.path());
  std::sort(files_.begin(), files_.end());
}

FlowField FileFlowProvider::at(int index) const {
  if (index < 0 || index >= count())
    throw InvalidInput("flow index " + std::to_string(index) + " out of range");
  return load_flow(files_[static_cast<std::size_t>(index)].string());
}

FlowField BlockMatchingFlowProvider::at(int index) const {
  if (index < 0 || index >= count())
    throw InvalidInput("flow index " + std::to_string(index) + " out of range");
  return block_matching_flow((*frames_)[static_cast<std::size_t>(index)],
                             (*frames_)[static_cast<std::size_t>(index) + 1], block_, radius_);
}

}  // namespace amsrc
