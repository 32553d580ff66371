#pragma once

// Shared helpers for the test binaries and the acceptance suite.

#include <algorithm>
#include <utility>
#include <vector>

#include "amsrc/model.hpp"
#include "amsrc/rng.hpp"
#include "amsrc/tensor.hpp"

namespace amsrc::testing {

template <typename S>
Tensor<S> random_tensor(Rng& rng, const Shape& shape, double lo, double hi,
                        bool requires_grad = false) {
  ArrayX<S> v(shape.numel());
  for (long i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(lo, hi));
  return Tensor<S>::leaf(shape, std::move(v), requires_grad);
}

/// Moves a model to a kink-free operating point for finite-difference
/// checking: strictly positive weights and biases keep every ReLU
/// pre-activation bounded away from zero for all inputs in the positive
/// orthant (entries stay positive under +-h perturbations), so central
/// differences at h=1e-3 measure the smooth branch. The zero branches of
/// ReLU/abs are covered by the per-op checks.
template <typename S>
void set_positive_params(AmsrcModel<S>& model, std::uint64_t seed, double w_lo = 0.01,
                         double w_hi = 0.12, double bias = 0.05) {
  Rng rng(seed);
  for (auto& p : model.params()) {
    auto& v = p.tensor.mutable_value();
    if (p.is_weight)
      for (long i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng.uniform(w_lo, w_hi));
    else
      v.setConstant(static_cast<S>(bias));
  }
}

/// Random per-channel ramps plus faint texture, all values positive. Through
/// positive weights the prediction inherits monotone spatial structure, so
/// the gradient-loss kink quantities (pixel differences and their magnitude
/// gaps) stay far from zero; alternating ramp directions across channels
/// keep the two streams' features decorrelated enough for healthy cosine
/// gradients.
inline Tensor<double> ramp_batch(Rng& rng, int n, int c, int hw, double base_lo, double base_hi,
                                 double slope_lo, double slope_hi, int phase, double texture) {
  ArrayX<double> v(static_cast<long>(n) * c * hw * hw);
  long idx = 0;
  for (int s = 0; s < n * c; ++s) {
    const double c0 = rng.uniform(base_lo, base_hi);
    const double ax = rng.uniform(slope_lo, slope_hi);
    const double ay = rng.uniform(slope_lo, slope_hi);
    const bool flip_x = (s + phase) % 2 == 0;
    const bool flip_y = (s + phase) % 3 == 0;
    for (int i = 0; i < hw; ++i)
      for (int j = 0; j < hw; ++j) {
        const double ii = flip_y ? hw - 1 - i : i;
        const double jj = flip_x ? hw - 1 - j : j;
        v[idx++] = c0 + ay * ii + ax * jj + texture * rng.uniform(0.0, 1.0);
      }
  }
  return Tensor<double>::leaf(Shape{n, c, hw, hw}, std::move(v));
}

/// Brute-force AUROC oracle: sweep every distinct score as a threshold and
/// integrate the ROC polyline with the trapezoid rule. Ties produce diagonal
/// segments, exactly matching the rank-statistic definition.
inline double auroc_threshold_sweep(const std::vector<double>& scores,
                                    const std::vector<int>& labels) {
  long n_pos = 0;
  for (int l : labels) n_pos += l != 0;
  const long n_neg = static_cast<long>(labels.size()) - n_pos;

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double area = 0.0;
  double tp = 0, fp = 0, prev_tp = 0, prev_fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] != 0)
        tp += 1;
      else
        fp += 1;
    }
    area += (fp - prev_fp) / n_neg * (tp + prev_tp) / (2.0 * n_pos);
    prev_tp = tp;
    prev_fp = fp;
    i = j + 1;
  }
  return area;
}

}  // namespace amsrc::testing
