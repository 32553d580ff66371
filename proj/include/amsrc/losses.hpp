#pragma once

#include <cmath>

#include "amsrc/model.hpp"
#include "amsrc/ops.hpp"

namespace amsrc {

/// Balancing hyper-parameters of the training objective. All nonnegative.
struct LossWeights {
  double intensity = 1.0;    // prediction l2 term
  double gradient = 1.0;     // image-gradient term
  double consistency = 1.0;  // appearance-motion cosine term
  double model = 1.0;        // weight decay term

  void validate() const {
    for (double v : {intensity, gradient, consistency, model})
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InvalidConfig("loss weights must be finite and >= 0");
  }
};

/// Mean over pixels and batch of the squared prediction error. Mean rather
/// than raw sum, so the weight is independent of patch and batch size.
template <typename S>
Tensor<S> intensity_loss(const Tensor<S>& prediction, const Tensor<S>& target) {
  check_same_shape(prediction.shape(), target.shape(), "intensity_loss");
  return mean(squared_difference(prediction, target));
}

/// Mean absolute difference between the spatial gradient magnitudes of the
/// prediction and of the target, over positions with both a vertical and a
/// horizontal neighbour. Implemented as one fused node; the backward pass
/// uses subgradient 0 at the absolute-value kinks.
template <typename S>
Tensor<S> gradient_loss(const Tensor<S>& prediction, const Tensor<S>& target) {
  check_same_shape(prediction.shape(), target.shape(), "gradient_loss");
  const Shape& s = prediction.shape();
  if (s.rank() != 4 || s[2] < 2 || s[3] < 2)
    throw InvalidInput("gradient_loss: needs NCHW input with H,W >= 2, got " + s.str());
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  const long planes = static_cast<long>(N) * C;
  const long plane = static_cast<long>(H) * W;
  const double count = static_cast<double>(planes) * (H - 1) * (W - 1);

  const S* pv = prediction.value().data();
  const S* tv = target.value().data();
  double acc = 0.0;
  for (long nc = 0; nc < planes; ++nc) {
    const S* p = pv + nc * plane;
    const S* t = tv + nc * plane;
    for (int i = 1; i < H; ++i) {
      for (int j = 1; j < W; ++j) {
        const S dvp = p[i * W + j] - p[(i - 1) * W + j];
        const S dvt = t[i * W + j] - t[(i - 1) * W + j];
        const S dhp = p[i * W + j] - p[i * W + j - 1];
        const S dht = t[i * W + j] - t[i * W + j - 1];
        acc += std::abs(std::abs(static_cast<double>(dvp)) - std::abs(static_cast<double>(dvt)));
        acc += std::abs(std::abs(static_cast<double>(dhp)) - std::abs(static_cast<double>(dht)));
      }
    }
  }
  ArrayX<S> out(1);
  out[0] = static_cast<S>(acc / count);

  auto sign = [](S x) -> S { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); };
  return Tensor<S>::op(
      Shape{1}, std::move(out), {prediction, target},
      [pn = prediction.node_, tn = target.node_, planes, plane, H, W, count,
       sign](TensorNode<S>& self) {
        const S k = static_cast<S>(self.grad[0] / count);
        S* gp = pn->requires_grad ? detail::ensure_grad(*pn) : nullptr;
        S* gt = tn->requires_grad ? detail::ensure_grad(*tn) : nullptr;
        for (long nc = 0; nc < planes; ++nc) {
          const S* p = pn->value.data() + nc * plane;
          const S* t = tn->value.data() + nc * plane;
          for (int i = 1; i < H; ++i) {
            for (int j = 1; j < W; ++j) {
              const S dvp = p[i * W + j] - p[(i - 1) * W + j];
              const S dvt = t[i * W + j] - t[(i - 1) * W + j];
              const S dhp = p[i * W + j] - p[i * W + j - 1];
              const S dht = t[i * W + j] - t[i * W + j - 1];
              const S sv = sign(std::abs(dvp) - std::abs(dvt));
              const S sh = sign(std::abs(dhp) - std::abs(dht));
              if (gp) {
                S* g = gp + nc * plane;
                const S cv = k * sv * sign(dvp);
                const S ch = k * sh * sign(dhp);
                g[i * W + j] += cv + ch;
                g[(i - 1) * W + j] -= cv;
                g[i * W + j - 1] -= ch;
              }
              if (gt) {
                S* g = gt + nc * plane;
                const S cv = k * sv * sign(dvt);
                const S ch = k * sh * sign(dht);
                g[i * W + j] -= cv + ch;
                g[(i - 1) * W + j] += cv;
                g[i * W + j - 1] += ch;
              }
            }
          }
        }
      });
}

/// Mean over the batch of one minus the cosine similarity between the
/// per-sample flattened appearance and motion features. In [0, 2]; exactly 1
/// for all-zero features (the epsilon pins the quotient at 0).
template <typename S>
Tensor<S> consistency_loss(const Tensor<S>& fea_frame, const Tensor<S>& fea_flow,
                           S eps = S(1e-8)) {
  check_same_shape(fea_frame.shape(), fea_flow.shape(), "consistency_loss");
  return mean(affine(cosine_similarity(fea_frame, fea_flow, eps), S(-1), S(1)));
}

/// Mean of squared entries over all weight tensors, biases excluded.
template <typename S>
Tensor<S> model_l2(const std::vector<Param<S>>& params) {
  Tensor<S> total;
  long count = 0;
  for (const auto& p : params) {
    if (!p.is_weight) continue;
    auto sq = sum(mul(p.tensor, p.tensor));
    total = total.defined() ? add(total, sq) : sq;
    count += p.tensor.numel();
  }
  if (!total.defined()) return Tensor<S>::scalar(S(0));
  return scale(total, static_cast<S>(1.0 / static_cast<double>(count)));
}

template <typename S>
struct LossTerms {
  Tensor<S> intensity;
  Tensor<S> gradient;
  Tensor<S> consistency;
  Tensor<S> model;
  Tensor<S> total;
};

/// All four labelled terms plus their weighted sum. An undefined fea_flow
/// (frame-only variant) contributes a constant zero consistency term.
template <typename S>
LossTerms<S> compute_losses(const Tensor<S>& prediction, const Tensor<S>& target,
                            const Tensor<S>& fea_frame, const Tensor<S>& fea_flow,
                            const std::vector<Param<S>>& params, const LossWeights& weights) {
  weights.validate();
  LossTerms<S> terms;
  terms.intensity = intensity_loss(prediction, target);
  terms.gradient = gradient_loss(prediction, target);
  terms.consistency = (fea_frame.defined() && fea_flow.defined())
                          ? consistency_loss(fea_frame, fea_flow)
                          : Tensor<S>::scalar(S(0));
  terms.model = model_l2(params);
  terms.total = add(add(scale(terms.intensity, static_cast<S>(weights.intensity)),
                        scale(terms.gradient, static_cast<S>(weights.gradient))),
                    add(scale(terms.consistency, static_cast<S>(weights.consistency)),
                        scale(terms.model, static_cast<S>(weights.model))));
  return terms;
}

template <typename S>
Tensor<S> total_loss(const Tensor<S>& prediction, const Tensor<S>& target,
                     const Tensor<S>& fea_frame, const Tensor<S>& fea_flow,
                     const std::vector<Param<S>>& params, const LossWeights& weights) {
  return compute_losses(prediction, target, fea_frame, fea_flow, params, weights).total;
}

}  // namespace amsrc
