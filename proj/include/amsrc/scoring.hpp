#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "amsrc/dataset.hpp"
#include "amsrc/model.hpp"
#include "amsrc/training.hpp"

namespace amsrc {

struct ScoreWeights {
  double w_f = 0.5;
  double w_p = 0.5;

  void validate() const {
    if (w_f < 0.0 || w_p < 0.0) throw InvalidConfig("score weights must be >= 0");
    if (w_f == 0.0 && w_p == 0.0) throw InvalidConfig("score weights must not both be zero");
  }

  // Paper-style presets for the three benchmark datasets.
  static ScoreWeights ped2_style() { return {1.0, 0.01}; }
  static ScoreWeights avenue_style() { return {0.2, 0.8}; }
  static ScoreWeights shanghaitech_style() { return {0.4, 0.6}; }
};

struct ObjectScore {
  std::string clip;
  int frame = 0;
  int object_id = 0;
  double s_f = 0.0;
  double s_p = 0.0;
  double s_fused = 0.0;
};

struct FrameScore {
  std::string clip;
  int frame = 0;
  double score = 0.0;
  int label = 0;
};

/// (S_f, S_p) of a single cube: feature inconsistency 1 - cos(fea_frame,
/// fea_flow) and mean squared error of the [0,1]-clamped prediction against
/// the target patch. The frame-only variant reports S_f = 0.
std::pair<double, double> object_scores(const AmsrcModel<float>& model, const Stc& stc);

std::vector<std::pair<double, double>> object_scores_batched(const AmsrcModel<float>& model,
                                                             const std::vector<Stc>& stcs,
                                                             int batch_size = 64);

/// Weighted sum of z-normalized component scores.
inline double fuse_score(double s_f, double s_p, const NormStats& stats,
                         const ScoreWeights& weights) {
  return weights.w_f * (s_f - stats.u_f) / stats.d_f +
         weights.w_p * (s_p - stats.u_p) / stats.d_p;
}

/// Frame score: maximum fused score over the frame's objects.
double frame_score(const std::vector<double>& fused_scores);

struct ScoreOutputs {
  std::vector<ObjectScore> objects;
  std::vector<FrameScore> frames;
};

/// Scores every extractable STC of every clip, then aggregates per frame
/// (max over objects). Frames without objects -- including the first t frames
/// of each clip -- receive the minimum fused score observed over the whole
/// set, assigned in a second pass.
ScoreOutputs score_dataset(const AmsrcModel<float>& model, const std::vector<ClipData>& clips,
                           const NormStats& stats, const ScoreWeights& weights,
                           int batch_size = 64);

/// Frame-level AUROC via the rank statistic (Mann-Whitney), ties counted as
/// one half; equal to trapezoidal integration of the ROC curve. Requires both
/// classes.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// CSV headers are exactly:
//   clip,frame,object_id,s_f,s_p,s_fused
//   clip,frame,score,label
void write_object_scores_csv(const std::filesystem::path& path,
                             const std::vector<ObjectScore>& scores);
void write_frame_scores_csv(const std::filesystem::path& path,
                            const std::vector<FrameScore>& scores);
std::vector<FrameScore> read_frame_scores_csv(const std::filesystem::path& path);

}  // namespace amsrc
