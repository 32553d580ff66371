#include "amsrc/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>

#include "amsrc/rng.hpp"
#include "amsrc/scoring.hpp"

namespace amsrc {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

BatchTensors assemble_batch(const std::vector<Stc>& stcs, const std::vector<int>& indices,
                            std::size_t begin, std::size_t end, const ArchConfig& arch) {
  const int t = arch.window;
  const int patch = arch.patch;
  const long plane = static_cast<long>(patch) * patch;
  const int batch = static_cast<int>(end - begin);
  if (batch <= 0) throw InvalidInput("assemble_batch: empty batch");

  ArrayX<float> frames(static_cast<long>(batch) * t * plane);
  ArrayX<float> flows(static_cast<long>(batch) * 2 * t * plane);
  ArrayX<float> targets(static_cast<long>(batch) * plane);
  for (int bi = 0; bi < batch; ++bi) {
    const Stc& stc = stcs[static_cast<std::size_t>(indices[begin + static_cast<std::size_t>(bi)])];
    if (stc.window != t || stc.patch != patch)
      throw InvalidInput("STC geometry t=" + std::to_string(stc.window) + ",patch=" +
                         std::to_string(stc.patch) + " does not match model t=" +
                         std::to_string(t) + ",patch=" + std::to_string(patch));
    std::copy_n(stc.frame_cube.data(), t * plane, frames.data() + static_cast<long>(bi) * t * plane);
    std::copy_n(stc.frame_cube.data() + t * plane, plane,
                targets.data() + static_cast<long>(bi) * plane);
    std::copy_n(stc.flow_cube.data(), 2 * t * plane,
                flows.data() + static_cast<long>(bi) * 2 * t * plane);
  }
  BatchTensors out;
  out.frames = Tensor<float>::leaf(Shape{batch, t, patch, patch}, std::move(frames));
  out.flows = Tensor<float>::leaf(Shape{batch, 2 * t, patch, patch}, std::move(flows));
  out.targets = Tensor<float>::leaf(Shape{batch, 1, patch, patch}, std::move(targets));
  return out;
}

TrainResult train_model(AmsrcModel<float>& model, const std::vector<Stc>& stcs,
                        const TrainConfig& cfg, std::ostream* progress) {
  cfg.validate();
  if (stcs.empty()) throw InvalidInput("training dataset is empty");

  Adam<float> opt(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng rng(cfg.seed);
  std::vector<int> indices(stcs.size());
  std::iota(indices.begin(), indices.end(), 0);

  TrainResult result;
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch > 0 && epoch % cfg.lr_decay_every == 0) lr *= cfg.lr_decay;
    rng.shuffle(indices);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    double weight_sum = 0.0;
    int batch_index = 0;
    for (std::size_t begin = 0; begin < indices.size();
         begin += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end =
          std::min(indices.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      BatchTensors batch = assemble_batch(stcs, indices, begin, end, model.arch());
      auto out = model.forward(batch.frames, batch.flows);
      auto terms =
          compute_losses(out.prediction, batch.targets, out.fea_frame, out.fea_flow,
                         model.params(), cfg.weights);
      const double total = terms.total.item();
      if (!std::isfinite(total))
        throw NumericalFailure("non-finite total loss at epoch " + std::to_string(epoch) +
                               ", batch " + std::to_string(batch_index));
      const double bs = static_cast<double>(end - begin);
      log.l_int += bs * terms.intensity.item();
      log.l_gd += bs * terms.gradient.item();
      log.l_sim += bs * terms.consistency.item();
      log.l_reg += bs * terms.model.item();
      log.total += bs * total;
      weight_sum += bs;

      terms.total.backward();
      opt.step(model.params(), lr);
      for (auto& p : model.params()) p.tensor.zero_grad();
    }
    log.l_int /= weight_sum;
    log.l_gd /= weight_sum;
    log.l_sim /= weight_sum;
    log.l_reg /= weight_sum;
    log.total /= weight_sum;
    result.log.push_back(log);
    if (progress)
      (*progress) << "epoch " << epoch << "  total " << log.total << "  l_int " << log.l_int
                  << "  l_gd " << log.l_gd << "  l_sim " << log.l_sim << "  l_reg " << log.l_reg
                  << "  lr " << log.lr << "\n";
  }
  return result;
}

std::pair<double, double> population_mean_std(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInput("population_mean_std: empty sample");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

NormStats compute_norm_stats(const AmsrcModel<float>& model, const std::vector<Stc>& stcs,
                             int batch_size) {
  if (stcs.empty()) throw InvalidInput("compute_norm_stats: empty dataset");
  const auto scores = object_scores_batched(model, stcs, batch_size);

  std::vector<double> s_f, s_p;
  s_f.reserve(scores.size());
  s_p.reserve(scores.size());
  for (const auto& [sf, sp] : scores) {
    s_f.push_back(sf);
    s_p.push_back(sp);
  }
  NormStats stats;
  std::tie(stats.u_f, stats.d_f) = population_mean_std(s_f);
  std::tie(stats.u_p, stats.d_p) = population_mean_std(s_p);
  constexpr double kFloor = 1e-12;
  if (stats.d_f < kFloor) {
    std::cerr << "warning: degenerate S_f spread (" << stats.d_f << "), flooring at " << kFloor
              << "\n";
    stats.d_f = kFloor;
  }
  if (stats.d_p < kFloor) {
    std::cerr << "warning: degenerate S_p spread (" << stats.d_p << "), flooring at " << kFloor
              << "\n";
    stats.d_p = kFloor;
  }
  return stats;
}

void write_loss_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "epoch,l_int,l_gd,l_sim,l_reg,total,lr\n";
  for (const auto& e : log)
    out << e.epoch << ',' << fmt(e.l_int) << ',' << fmt(e.l_gd) << ',' << fmt(e.l_sim) << ','
        << fmt(e.l_reg) << ',' << fmt(e.total) << ',' << fmt(e.lr) << '\n';
}

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string());
  out << "u_f,d_f,u_p,d_p\n"
      << fmt(stats.u_f) << ',' << fmt(stats.d_f) << ',' << fmt(stats.u_p) << ','
      << fmt(stats.d_p) << '\n';
}

NormStats read_norm_stats(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header, row;
  if (!std::getline(in, header) || header != "u_f,d_f,u_p,d_p" || !std::getline(in, row))
    throw IoError("bad norm-stats file: " + path.string());
  NormStats stats;
  if (std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf", &stats.u_f, &stats.d_f, &stats.u_p,
                  &stats.d_p) != 4)
    throw IoError("bad norm-stats row in " + path.string());
  if (stats.d_f <= 0.0 || stats.d_p <= 0.0)
    throw IoError("norm-stats deviations must be positive: " + path.string());
  return stats;
}

}  // namespace amsrc
