#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include "amsrc/dataset.hpp"
#include "amsrc/losses.hpp"
#include "amsrc/model.hpp"

namespace amsrc {

struct TrainConfig {
  int batch_size = 64;
  int epochs = 8;
  double learning_rate = 2e-4;
  double lr_decay = 0.8;
  int lr_decay_every = 10;  // decay applied at the start of epochs 10, 20, ...
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights weights{};
  std::uint64_t seed = 1;

  void validate() const {
    if (learning_rate <= 0.0) throw InvalidConfig("learning rate must be > 0");
    if (batch_size < 1) throw InvalidConfig("batch size must be >= 1");
    if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw InvalidConfig("lr decay must be in (0,1]");
    if (lr_decay_every < 1) throw InvalidConfig("lr decay interval must be >= 1");
    weights.validate();
  }

  // Paper-style presets (full-dataset scale; the synthetic default above is
  // sized for CPU desk runs).
  static TrainConfig ped2_style() {
    TrainConfig c;
    c.batch_size = 128;
    c.epochs = 60;
    c.weights = LossWeights{1.0, 1.0, 1.0, 1.0};
    return c;
  }
  static TrainConfig avenue_style() {
    TrainConfig c;
    c.batch_size = 128;
    c.epochs = 40;
    c.weights = LossWeights{1.0, 1.0, 1.0, 1.0};
    return c;
  }
  static TrainConfig shanghaitech_style() {
    TrainConfig c;
    c.batch_size = 256;
    c.epochs = 40;
    c.weights = LossWeights{1.0, 1.0, 10.0, 1.0};
    return c;
  }
};

/// Learning rate in effect during `epoch` (0-indexed): the initial rate
/// multiplied by decay once per completed interval, as sequential float
/// products.
inline double learning_rate_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int k = 0; k < epoch / cfg.lr_decay_every; ++k) lr *= cfg.lr_decay;
  return lr;
}

struct EpochLog {
  int epoch = 0;
  double l_int = 0, l_gd = 0, l_sim = 0, l_reg = 0, total = 0, lr = 0;
};

/// Score-normalization statistics of the normal training samples: population
/// mean and standard deviation of the feature-inconsistency score S_f and of
/// the prediction-error score S_p.
struct NormStats {
  double u_f = 0.0;
  double d_f = 1.0;
  double u_p = 0.0;
  double d_p = 1.0;
};

template <typename S>
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<Param<S>>& params, double lr) {
    if (states_.empty()) states_.resize(params.size());
    ++t_;
    const S bc1 = static_cast<S>(1.0 - std::pow(beta1_, t_));
    const S bc2 = static_cast<S>(1.0 - std::pow(beta2_, t_));
    const S b1 = static_cast<S>(beta1_), b2 = static_cast<S>(beta2_);
    const S eps = static_cast<S>(eps_), rate = static_cast<S>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!p.tensor.has_grad()) continue;
      auto& st = states_[i];
      if (st.m.size() == 0) {
        st.m = ArrayX<S>::Zero(p.tensor.numel());
        st.v = ArrayX<S>::Zero(p.tensor.numel());
      }
      const ArrayX<S>& g = p.tensor.grad();
      st.m = b1 * st.m + (S(1) - b1) * g;
      st.v = b2 * st.v + (S(1) - b2) * g.square();
      p.tensor.mutable_value() -= rate * (st.m / bc1) / ((st.v / bc2).sqrt() + eps);
    }
  }

  long step_count() const { return t_; }

 private:
  struct State {
    ArrayX<S> m, v;
  };
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<State> states_;
};

struct BatchTensors {
  Tensor<float> frames;   // {B, t, patch, patch}: first t slices of each cube
  Tensor<float> flows;    // {B, 2t, patch, patch}
  Tensor<float> targets;  // {B, 1, patch, patch}: last slice
};

/// Packs stcs[indices[begin..end)] into batch tensors.
BatchTensors assemble_batch(const std::vector<Stc>& stcs, const std::vector<int>& indices,
                            std::size_t begin, std::size_t end, const ArchConfig& arch);

struct TrainResult {
  std::vector<EpochLog> log;
};

/// Adam-optimized minimization of the total loss over epoch-shuffled batches.
/// Deterministic for a fixed (seed, config, dataset): identical runs produce
/// bit-identical parameters. Aborts with a diagnostic naming the batch if the
/// loss goes non-finite.
TrainResult train_model(AmsrcModel<float>& model, const std::vector<Stc>& stcs,
                        const TrainConfig& cfg, std::ostream* progress = nullptr);

/// Population (not sample) mean and standard deviation.
std::pair<double, double> population_mean_std(const std::vector<double>& values);

/// Population statistics of (S_f, S_p) over the training set, with the
/// standard deviations floored at 1e-12 (a warning is logged when the floor
/// engages).
NormStats compute_norm_stats(const AmsrcModel<float>& model, const std::vector<Stc>& stcs,
                             int batch_size = 64);

/// CSV columns: epoch,l_int,l_gd,l_sim,l_reg,total,lr
void write_loss_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

void write_norm_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats read_norm_stats(const std::filesystem::path& path);

}  // namespace amsrc
