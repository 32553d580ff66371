#include "amsrc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace amsrc {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<double, double>> object_scores_batched(const AmsrcModel<float>& model,
                                                             const std::vector<Stc>& stcs,
                                                             int batch_size) {
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  NoGradGuard no_grad;
  const ArchConfig& arch = model.arch();
  const long plane = static_cast<long>(arch.patch) * arch.patch;
  std::vector<int> indices(stcs.size());
  std::iota(indices.begin(), indices.end(), 0);

  std::vector<std::pair<double, double>> scores;
  scores.reserve(stcs.size());
  for (std::size_t begin = 0; begin < stcs.size();
       begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(stcs.size(), begin + static_cast<std::size_t>(batch_size));
    BatchTensors batch = assemble_batch(stcs, indices, begin, end, arch);
    auto out = model.forward(batch.frames, batch.flows);

    const int n = static_cast<int>(end - begin);
    const long fea_len = out.fea_frame.numel() / n;
    const ArrayX<float> pred = clamp01(out.prediction.value());
    for (int i = 0; i < n; ++i) {
      double s_f = 0.0;
      if (out.fea_flow.defined()) {
        const float* fa = out.fea_frame.value().data() + static_cast<long>(i) * fea_len;
        const float* fb = out.fea_flow.value().data() + static_cast<long>(i) * fea_len;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (long k = 0; k < fea_len; ++k) {
          dot += static_cast<double>(fa[k]) * fb[k];
          na += static_cast<double>(fa[k]) * fa[k];
          nb += static_cast<double>(fb[k]) * fb[k];
        }
        s_f = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb) + 1e-8);
      }
      const float* pp = pred.data() + static_cast<long>(i) * plane;
      const float* tp = batch.targets.value().data() + static_cast<long>(i) * plane;
      double se = 0.0;
      for (long k = 0; k < plane; ++k) {
        const double d = static_cast<double>(pp[k]) - tp[k];
        se += d * d;
      }
      scores.emplace_back(s_f, se / static_cast<double>(plane));
    }
  }
  return scores;
}

std::pair<double, double> object_scores(const AmsrcModel<float>& model, const Stc& stc) {
  return object_scores_batched(model, {stc}, 1)[0];
}

double frame_score(const std::vector<double>& fused_scores) {
  if (fused_scores.empty()) throw InvalidInput("frame_score: no object scores");
  return *std::max_element(fused_scores.begin(), fused_scores.end());
}

ScoreOutputs score_dataset(const AmsrcModel<float>& model, const std::vector<ClipData>& clips,
                           const NormStats& stats, const ScoreWeights& weights, int batch_size) {
  weights.validate();
  const int t = model.arch().window;

  ScoreOutputs out;
  // (clip index, frame) -> best fused score; missing entries get the global
  // minimum in a second pass.
  std::map<std::pair<std::size_t, int>, double> frame_best;
  double global_min = std::numeric_limits<double>::infinity();

  for (std::size_t ci = 0; ci < clips.size(); ++ci) {
    const ClipData& clip = clips[ci];
    const std::vector<Stc> stcs = extract_stcs(clip, t, model.arch().patch);
    const auto raw = object_scores_batched(model, stcs, batch_size);
    for (std::size_t i = 0; i < stcs.size(); ++i) {
      const auto [s_f, s_p] = raw[i];
      const double fused = fuse_score(s_f, s_p, stats, weights);
      out.objects.push_back(
          {clip.clip.id, stcs[i].target_frame, stcs[i].object_id, s_f, s_p, fused});
      global_min = std::min(global_min, fused);
      auto key = std::make_pair(ci, stcs[i].target_frame);
      auto it = frame_best.find(key);
      if (it == frame_best.end() || fused > it->second) frame_best[key] = fused;
    }
  }
  if (!std::isfinite(global_min)) global_min = 0.0;  // no objects anywhere

  for (std::size_t ci = 0; ci < clips.size(); ++ci) {
    const ClipData& clip = clips[ci];
    for (int f = 0; f < static_cast<int>(clip.clip.frames.size()); ++f) {
      const auto it = frame_best.find(std::make_pair(ci, f));
      const double score = it != frame_best.end() ? it->second : global_min;
      out.frames.push_back({clip.clip.id, f, score, clip.label_at(f)});
    }
  }
  return out;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw InvalidInput("auroc: " + std::to_string(scores.size()) + " scores vs " +
                       std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.size();
  long n_pos = 0;
  for (int l : labels) n_pos += l != 0;
  const long n_neg = static_cast<long>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw UndefinedMetric("auroc needs both classes (got " + std::to_string(n_pos) +
                          " positives of " + std::to_string(n) + ")");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups, then the Mann-Whitney U statistic.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] != 0) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void write_object_scores_csv(const std::filesystem::path& path,
                             const std::vector<ObjectScore>& scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "clip,frame,object_id,s_f,s_p,s_fused\n";
  for (const auto& s : scores)
    out << s.clip << ',' << s.frame << ',' << s.object_id << ',' << fmt(s.s_f) << ','
        << fmt(s.s_p) << ',' << fmt(s.s_fused) << '\n';
}

void write_frame_scores_csv(const std::filesystem::path& path,
                            const std::vector<FrameScore>& scores) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "clip,frame,score,label\n";
  for (const auto& s : scores)
    out << s.clip << ',' << s.frame << ',' << fmt(s.score) << ',' << s.label << '\n';
}

std::vector<FrameScore> read_frame_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "clip,frame,score,label")
    throw IoError("bad frame-score header in " + path.string() + ": '" + line + "'");
  std::vector<FrameScore> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string clip, frame, score, label;
    if (!std::getline(ss, clip, ',') || !std::getline(ss, frame, ',') ||
        !std::getline(ss, score, ',') || !std::getline(ss, label, ','))
      throw IoError("bad frame-score row in " + path.string());
    out.push_back({clip, std::stoi(frame), std::stod(score), std::stoi(label)});
  }
  return out;
}

}  // namespace amsrc
