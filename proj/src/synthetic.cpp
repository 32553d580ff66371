#include "amsrc/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cstdio>

#include "amsrc/errors.hpp"
#include "amsrc/png_io.hpp"

namespace amsrc {

namespace fs = std::filesystem;

void GenConfig::validate() const {
  if (train_clips < 1) throw InvalidConfig("at least one training clip is required");
  if (test_clips < 0) throw InvalidConfig("test clip count must be >= 0");
  if (frames_per_clip < 12) throw InvalidConfig("frames per clip must be >= 12");
  if (height < 32 || width < 32) throw InvalidConfig("frame size must be at least 32x32");
  if (sprites_per_clip < 1) throw InvalidConfig("at least one sprite per clip is required");
}

namespace {

struct SpriteState {
  SpriteSpec spec;
  int x, y;    // center at current frame
  int vx, vy;

  bool active(int frame, int clip_frames) const {
    const int end = spec.active_end < 0 ? clip_frames : spec.active_end;
    return frame >= spec.active_begin && frame < end;
  }
};

// Reflecting step; returns the actual displacement applied.
std::pair<int, int> advance(SpriteState& s, int width, int height) {
  const int lo_x = s.spec.half, hi_x = width - 1 - s.spec.half;
  const int lo_y = s.spec.half, hi_y = height - 1 - s.spec.half;
  const int ox = s.x, oy = s.y;
  int nx = s.x + s.vx, ny = s.y + s.vy;
  if (nx < lo_x) {
    nx = 2 * lo_x - nx;
    s.vx = -s.vx;
  } else if (nx > hi_x) {
    nx = 2 * hi_x - nx;
    s.vx = -s.vx;
  }
  if (ny < lo_y) {
    ny = 2 * lo_y - ny;
    s.vy = -s.vy;
  } else if (ny > hi_y) {
    ny = 2 * hi_y - ny;
    s.vy = -s.vy;
  }
  s.x = nx;
  s.y = ny;
  return {nx - ox, ny - oy};
}

template <typename Fn>
void for_each_mask_pixel(const SpriteState& s, int width, int height, Fn&& fn) {
  const int h = s.spec.half;
  for (int dy = -h; dy <= h; ++dy) {
    const int py = s.y + dy;
    if (py < 0 || py >= height) continue;
    for (int dx = -h; dx <= h; ++dx) {
      const int px = s.x + dx;
      if (px < 0 || px >= width) continue;
      if (!s.spec.square && dx * dx + dy * dy > h * h) continue;
      fn(py, px);
    }
  }
}

Image quantize(const Image& img) {
  Image out(img.rows(), img.cols());
  for (int i = 0; i < img.rows(); ++i)
    for (int j = 0; j < img.cols(); ++j) out(i, j) = pixel_to_float(float_to_pixel(img(i, j)));
  return out;
}

}  // namespace

ClipData render_synthetic_clip(const Image& background, const std::vector<SpriteSpec>& sprites,
                               int frames, const std::string& id) {
  const int height = static_cast<int>(background.rows());
  const int width = static_cast<int>(background.cols());
  if (frames < 2) throw InvalidConfig("clip needs at least 2 frames");

  std::vector<SpriteState> states;
  states.reserve(sprites.size());
  for (const auto& spec : sprites) states.push_back({spec, spec.x, spec.y, spec.vx, spec.vy});

  ClipData data;
  data.clip.id = id;
  data.clip.frames.reserve(static_cast<std::size_t>(frames));

  // Trajectories first: positions per frame and the displacement taken out of
  // each frame, so flow can be emitted alongside rendering.
  std::vector<std::vector<std::pair<int, int>>> centers(states.size());
  std::vector<std::vector<std::pair<int, int>>> steps(states.size());
  for (std::size_t si = 0; si < states.size(); ++si) {
    centers[si].reserve(static_cast<std::size_t>(frames));
    steps[si].reserve(static_cast<std::size_t>(frames));
    SpriteState s = states[si];
    for (int f = 0; f < frames; ++f) {
      centers[si].emplace_back(s.x, s.y);
      steps[si].push_back(advance(s, width, height));
    }
  }

  auto state_at = [&](std::size_t si, int f) {
    SpriteState s = states[si];
    s.x = centers[si][static_cast<std::size_t>(f)].first;
    s.y = centers[si][static_cast<std::size_t>(f)].second;
    return s;
  };

  for (int f = 0; f < frames; ++f) {
    Image frame = background;
    int label = 0;
    for (std::size_t si = 0; si < states.size(); ++si) {
      SpriteState s = state_at(si, f);
      if (!s.active(f, frames)) continue;
      for_each_mask_pixel(s, width, height,
                          [&](int py, int px) { frame(py, px) = s.spec.intensity; });
      data.boxes.push_back({f, s.x - s.spec.half, s.y - s.spec.half, 2 * s.spec.half + 1,
                            2 * s.spec.half + 1, static_cast<int>(si)});
      if (s.spec.anomalous) label = 1;
    }
    data.clip.frames.push_back(quantize(frame));
    data.labels.push_back({f, label});
  }

  for (int f = 0; f + 1 < frames; ++f) {
    FlowField flow;
    flow.u = Image::Zero(height, width);
    flow.v = Image::Zero(height, width);
    for (std::size_t si = 0; si < states.size(); ++si) {
      SpriteState s = state_at(si, f);
      if (!s.active(f, frames) || !s.active(f + 1, frames)) continue;
      const auto [du, dv] = steps[si][static_cast<std::size_t>(f)];
      for_each_mask_pixel(s, width, height, [&](int py, int px) {
        flow.u(py, px) = static_cast<float>(du);
        flow.v(py, px) = static_cast<float>(dv);
      });
    }
    data.flows.push_back(std::move(flow));
  }
  return data;
}

Image make_background(Rng& rng, int height, int width) {
  Image img(height, width);
  for (int i = 0; i < height; ++i)
    for (int j = 0; j < width; ++j) img(i, j) = static_cast<float>(rng.uniform());

  // Two box-blur passes leave smooth blobs; rescale into a mid-gray band so
  // sprites keep contrast.
  const int radius = 2;
  for (int pass = 0; pass < 2; ++pass) {
    Image blurred(height, width);
    for (int i = 0; i < height; ++i) {
      for (int j = 0; j < width; ++j) {
        float acc = 0.0f;
        int count = 0;
        for (int di = -radius; di <= radius; ++di) {
          const int y = std::clamp(i + di, 0, height - 1);
          for (int dj = -radius; dj <= radius; ++dj) {
            const int x = std::clamp(j + dj, 0, width - 1);
            acc += img(y, x);
            ++count;
          }
        }
        blurred(i, j) = acc / static_cast<float>(count);
      }
    }
    img = blurred;
  }

  const float lo = img.minCoeff();
  const float hi = img.maxCoeff();
  const float span = hi - lo > 1e-6f ? hi - lo : 1.0f;
  return 0.25f + (img - lo) / span * 0.35f;
}

namespace {

constexpr std::array<std::pair<int, int>, 12> kNormalVelocities = {{{1, 0},
                                                                    {-1, 0},
                                                                    {0, 1},
                                                                    {0, -1},
                                                                    {1, 1},
                                                                    {1, -1},
                                                                    {-1, 1},
                                                                    {-1, -1},
                                                                    {2, 0},
                                                                    {-2, 0},
                                                                    {0, 2},
                                                                    {0, -2}}};

constexpr std::array<std::pair<int, int>, 12> kFastVelocities = {{{5, 0},
                                                                  {-5, 0},
                                                                  {0, 5},
                                                                  {0, -5},
                                                                  {4, 3},
                                                                  {4, -3},
                                                                  {-4, 3},
                                                                  {-4, -3},
                                                                  {3, 4},
                                                                  {3, -4},
                                                                  {-3, 4},
                                                                  {-3, -4}}};

SpriteSpec random_sprite(Rng& rng, const GenConfig& cfg, bool anomalous, bool square) {
  SpriteSpec s;
  s.square = square;
  s.anomalous = anomalous;
  s.half = static_cast<int>(rng.uniform_int(4, 6));
  s.intensity = static_cast<float>(rng.uniform(0.75, 0.95));
  s.x = static_cast<int>(rng.uniform_int(s.half + 1, cfg.width - 2 - s.half));
  s.y = static_cast<int>(rng.uniform_int(s.half + 1, cfg.height - 2 - s.half));
  const auto& table = (anomalous && !square) ? kFastVelocities : kNormalVelocities;
  const auto [vx, vy] = table[static_cast<std::size_t>(rng.uniform_int(0, 11))];
  s.vx = vx;
  s.vy = vy;
  return s;
}

}  // namespace

ClipData make_synthetic_clip(Rng& rng, const GenConfig& cfg, bool test_split, int clip_index,
                             const std::string& id) {
  Image bg = make_background(rng, cfg.height, cfg.width);
  std::vector<SpriteSpec> sprites;
  for (int i = 0; i < cfg.sprites_per_clip; ++i)
    sprites.push_back(random_sprite(rng, cfg, false, false));
  if (test_split) {
    const bool square = clip_index % 2 == 1;  // even: motion anomaly, odd: appearance
    SpriteSpec anom = random_sprite(rng, cfg, true, square);
    const int begin = static_cast<int>(rng.uniform_int(10, std::max(11, cfg.frames_per_clip / 3)));
    const int len = static_cast<int>(
        rng.uniform_int(cfg.frames_per_clip / 3, cfg.frames_per_clip / 2));
    anom.active_begin = begin;
    anom.active_end = std::min(begin + len, cfg.frames_per_clip - 5);
    sprites.push_back(anom);
  }
  return render_synthetic_clip(bg, sprites, cfg.frames_per_clip, id);
}

void write_clip(const fs::path& clip_dir, const ClipData& data) {
  fs::create_directories(clip_dir / "frames");
  fs::create_directories(clip_dir / "flow");
  char name[32];
  for (std::size_t f = 0; f < data.clip.frames.size(); ++f) {
    std::snprintf(name, sizeof(name), "%06zu.png", f);
    write_png_gray8((clip_dir / "frames" / name).string(), data.clip.frames[f]);
  }
  for (std::size_t k = 0; k < data.flows.size(); ++k) {
    std::snprintf(name, sizeof(name), "%06zu.amfl", k);
    save_flow((clip_dir / "flow" / name).string(), data.flows[k]);
  }
  write_boxes_csv(clip_dir / "boxes.csv", data.boxes);
  write_labels_csv(clip_dir / "labels.csv", data.labels);
}

GenSummary generate_synthetic(const GenConfig& config, std::uint64_t seed,
                              const fs::path& out_dir) {
  config.validate();
  Rng master(seed);
  GenSummary summary;
  summary.train_clips = config.train_clips;
  summary.test_clips = config.test_clips;

  char name[32];
  for (int c = 0; c < config.train_clips; ++c) {
    Rng clip_rng = master.fork(static_cast<std::uint64_t>(c));
    std::snprintf(name, sizeof(name), "train_%03d", c);
    ClipData data = make_synthetic_clip(clip_rng, config, false, c, name);
    write_clip(out_dir / "train" / name, data);
    summary.frames += static_cast<int>(data.clip.frames.size());
    summary.boxes += static_cast<int>(data.boxes.size());
  }
  for (int c = 0; c < config.test_clips; ++c) {
    Rng clip_rng = master.fork(static_cast<std::uint64_t>(1000 + c));
    std::snprintf(name, sizeof(name), "test_%03d", c);
    ClipData data = make_synthetic_clip(clip_rng, config, true, c, name);
    write_clip(out_dir / "test" / name, data);
    summary.frames += static_cast<int>(data.clip.frames.size());
    summary.boxes += static_cast<int>(data.boxes.size());
    for (const auto& l : data.labels) summary.anomalous_frames += l.label;
  }
  return summary;
}

}  // namespace amsrc
