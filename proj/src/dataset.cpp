#include "amsrc/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "amsrc/errors.hpp"
#include "amsrc/png_io.hpp"

namespace amsrc {

namespace fs = std::filesystem;

Stc build_stc(const VideoClip& clip, const std::vector<FlowField>& flows, const RoIBox& box,
              int t, int patch) {
  if (t < 1) throw InvalidInput("build_stc: window must be >= 1");
  if (box.frame < t)
    throw WindowTooShort("frame " + std::to_string(box.frame) + " has fewer than t=" +
                         std::to_string(t) + " predecessors");
  if (box.frame >= static_cast<int>(clip.frames.size()))
    throw InvalidBox("frame " + std::to_string(box.frame) + " beyond clip length " +
                     std::to_string(clip.frames.size()));
  if (box.w <= 0 || box.h <= 0 || box.x < 0 || box.y < 0 || box.x + box.w > clip.width() ||
      box.y + box.h > clip.height())
    throw InvalidBox("box (" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                     std::to_string(box.w) + "," + std::to_string(box.h) + ") outside " +
                     std::to_string(clip.width()) + "x" + std::to_string(clip.height()) +
                     " frame");
  if (static_cast<int>(flows.size()) < box.frame)
    throw InvalidInput("build_stc: flows cover " + std::to_string(flows.size()) +
                       " frame pairs, need up to " + std::to_string(box.frame - 1));

  const long plane = static_cast<long>(patch) * patch;
  Stc stc;
  stc.window = t;
  stc.patch = patch;
  stc.clip_id = clip.id;
  stc.target_frame = box.frame;
  stc.object_id = box.object_id;
  stc.frame_cube.resize((t + 1) * plane);
  stc.flow_cube.resize(t * 2 * plane);

  for (int k = 0; k <= t; ++k) {
    const int f = box.frame - t + k;
    const Image patch_img =
        resize_bilinear(crop(clip.frames[static_cast<std::size_t>(f)], box.x, box.y, box.w, box.h),
                        patch, patch);
    std::copy_n(patch_img.data(), plane, stc.frame_cube.data() + k * plane);
  }

  const float su = static_cast<float>(patch) / static_cast<float>(box.w);
  const float sv = static_cast<float>(patch) / static_cast<float>(box.h);
  for (int k = 0; k < t; ++k) {
    const int f = box.frame - t + k;  // flow f -> f+1
    const FlowField& fl = flows[static_cast<std::size_t>(f)];
    const Image up = resize_bilinear(crop(fl.u, box.x, box.y, box.w, box.h), patch, patch) * su;
    const Image vp = resize_bilinear(crop(fl.v, box.x, box.y, box.w, box.h), patch, patch) * sv;
    std::copy_n(up.data(), plane, stc.flow_cube.data() + (2 * k) * plane);
    std::copy_n(vp.data(), plane, stc.flow_cube.data() + (2 * k + 1) * plane);
  }
  return stc;
}

std::vector<RoIBox> ClipData::boxes_at(int frame) const {
  std::vector<RoIBox> out;
  for (const auto& b : boxes)
    if (b.frame == frame) out.push_back(b);
  return out;
}

int ClipData::label_at(int frame) const {
  for (const auto& l : labels)
    if (l.frame == frame) return l.label;
  return 0;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header)
    throw IoError("bad CSV header in " + path.string() + ": expected '" + header + "', got '" +
                  line + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  return rows;
}

}  // namespace

void write_boxes_csv(const fs::path& path, const std::vector<RoIBox>& boxes) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "frame,x,y,w,h,object_id\n";
  for (const auto& b : boxes)
    out << b.frame << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << ',' << b.object_id
        << '\n';
}

std::vector<RoIBox> read_boxes_csv(const fs::path& path) {
  std::vector<RoIBox> boxes;
  for (const auto& row : read_csv(path, "frame,x,y,w,h,object_id")) {
    if (row.size() != 6) throw IoError("bad box row in " + path.string());
    boxes.push_back({std::stoi(row[0]), std::stoi(row[1]), std::stoi(row[2]), std::stoi(row[3]),
                     std::stoi(row[4]), std::stoi(row[5])});
  }
  return boxes;
}

void write_labels_csv(const fs::path& path, const std::vector<FrameLabel>& labels) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "frame,label\n";
  for (const auto& l : labels) out << l.frame << ',' << l.label << '\n';
}

std::vector<FrameLabel> read_labels_csv(const fs::path& path) {
  std::vector<FrameLabel> labels;
  for (const auto& row : read_csv(path, "frame,label")) {
    if (row.size() != 2) throw IoError("bad label row in " + path.string());
    labels.push_back({std::stoi(row[0]), std::stoi(row[1])});
  }
  return labels;
}

ClipData load_clip(const fs::path& clip_dir, FlowSource source) {
  ClipData data;
  data.clip.id = clip_dir.filename().string();

  const fs::path frame_dir = clip_dir / "frames";
  if (!fs::is_directory(frame_dir)) throw IoError("missing frames/ in " + clip_dir.string());
  std::vector<fs::path> frame_files;
  for (const auto& e : fs::directory_iterator(frame_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") frame_files.push_back(e.path());
  std::sort(frame_files.begin(), frame_files.end());
  if (frame_files.empty()) throw IoError("no frames in " + frame_dir.string());
  data.clip.frames.reserve(frame_files.size());
  for (const auto& f : frame_files) data.clip.frames.push_back(read_png_gray(f.string()));

  data.boxes = read_boxes_csv(clip_dir / "boxes.csv");
  data.labels = read_labels_csv(clip_dir / "labels.csv");

  const fs::path flow_dir = clip_dir / "flow";
  const bool have_files = fs::is_directory(flow_dir);
  if (source == FlowSource::Files && !have_files)
    throw IoError("flow files requested but missing in " + clip_dir.string());
  const int pairs = static_cast<int>(data.clip.frames.size()) - 1;
  data.flows.reserve(static_cast<std::size_t>(pairs));
  if (source != FlowSource::BlockMatching && have_files) {
    FileFlowProvider provider(flow_dir);
    if (provider.count() != pairs)
      throw IoError("expected " + std::to_string(pairs) + " flow files in " + flow_dir.string() +
                    ", found " + std::to_string(provider.count()));
    for (int k = 0; k < pairs; ++k) data.flows.push_back(provider.at(k));
  } else {
    BlockMatchingFlowProvider provider(&data.clip.frames);
    for (int k = 0; k < pairs; ++k) data.flows.push_back(provider.at(k));
  }
  return data;
}

namespace {

std::vector<ClipData> load_split(const fs::path& dir, FlowSource source) {
  std::vector<ClipData> clips;
  if (!fs::is_directory(dir)) return clips;
  std::vector<fs::path> clip_dirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) clip_dirs.push_back(e.path());
  std::sort(clip_dirs.begin(), clip_dirs.end());
  for (const auto& d : clip_dirs) clips.push_back(load_clip(d, source));
  return clips;
}

}  // namespace

Dataset load_dataset(const fs::path& root, FlowSource source) {
  if (!fs::is_directory(root)) throw IoError("dataset root missing: " + root.string());
  Dataset ds;
  ds.train = load_split(root / "train", source);
  ds.test = load_split(root / "test", source);
  if (ds.train.empty() && ds.test.empty())
    throw IoError("no clips under " + root.string() + " (expected train/ and test/)");
  return ds;
}

std::vector<Stc> extract_stcs(const ClipData& clip, int t, int patch) {
  std::vector<RoIBox> sorted = clip.boxes;
  std::sort(sorted.begin(), sorted.end(), [](const RoIBox& a, const RoIBox& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.object_id < b.object_id;
  });
  std::vector<Stc> stcs;
  for (const auto& box : sorted) {
    if (box.frame < t) continue;  // no padding for early frames
    stcs.push_back(build_stc(clip.clip, clip.flows, box, t, patch));
  }
  return stcs;
}

}  // namespace amsrc
