#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "amsrc/tensor.hpp"

// Differentiable array operations. Every op builds a graph node whose
// backward closure accumulates into the parents' grads; tracking is skipped
// entirely under NoGradGuard. Layout is row-major, conv tensors are NCHW.

namespace amsrc {

namespace detail {

template <typename S>
inline S* ensure_grad(TensorNode<S>& n) {
  if (n.grad.size() == 0) n.grad = ArrayX<S>::Zero(n.value.size());
  return n.grad.data();
}

// Unpack one sample into patch columns: cols is (C*kh*kw) x (Ho*Wo), row-major.
template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo,
            S* cols) {
  const long span = static_cast<long>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        S* row = cols + (static_cast<long>(c) * kh * kw + ky * kw + kx) * span;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) {
            for (int ox = 0; ox < Wo; ++ox) row[oy * Wo + ox] = S(0);
            continue;
          }
          const S* src = x + (static_cast<long>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

// Scatter-add of patch-column grads back onto the input sample.
template <typename S>
void col2im_add(const S* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
                int Wo, S* gx) {
  const long span = static_cast<long>(Ho) * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const S* row = cols + (static_cast<long>(c) * kh * kw + ky * kw + kx) * span;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          S* dst = gx + (static_cast<long>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  ArrayX<S> v = x.value().max(S(0));
  return Tensor<S>::op(x.shape(), std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad) xn->accumulate_expr(self.grad * (xn->value > S(0)).template cast<S>());
  });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  ArrayX<S> v = S(1) / (S(1) + (-x.value()).exp());
  return Tensor<S>::op(x.shape(), std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad) xn->accumulate_expr(self.grad * self.value * (S(1) - self.value));
  });
}

// |x| with subgradient 0 at the origin.
template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
  ArrayX<S> v = x.value().abs();
  return Tensor<S>::op(x.shape(), std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad) xn->accumulate_expr(self.grad * xn->value.sign());
  });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a.shape(), b.shape(), "add");
  ArrayX<S> v = a.value() + b.value();
  return Tensor<S>::op(a.shape(), std::move(v), {a, b},
                       [an = a.node_, bn = b.node_](TensorNode<S>& self) {
                         if (an->requires_grad) an->accumulate(self.grad);
                         if (bn->requires_grad) bn->accumulate(self.grad);
                       });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a.shape(), b.shape(), "sub");
  ArrayX<S> v = a.value() - b.value();
  return Tensor<S>::op(a.shape(), std::move(v), {a, b},
                       [an = a.node_, bn = b.node_](TensorNode<S>& self) {
                         if (an->requires_grad) an->accumulate(self.grad);
                         if (bn->requires_grad) bn->accumulate_expr(-self.grad);
                       });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a.shape(), b.shape(), "mul");
  ArrayX<S> v = a.value() * b.value();
  return Tensor<S>::op(a.shape(), std::move(v), {a, b},
                       [an = a.node_, bn = b.node_](TensorNode<S>& self) {
                         if (an->requires_grad) an->accumulate_expr(self.grad * bn->value);
                         if (bn->requires_grad) bn->accumulate_expr(self.grad * an->value);
                       });
}

/// y = a*x + b, elementwise with scalar coefficients.
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S a, S b) {
  ArrayX<S> v = a * x.value() + b;
  return Tensor<S>::op(x.shape(), std::move(v), {x}, [xn = x.node_, a](TensorNode<S>& self) {
    if (xn->requires_grad) xn->accumulate_expr(self.grad * a);
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S a) {
  return affine(x, a, S(0));
}

template <typename S>
Tensor<S> squared_difference(const Tensor<S>& a, const Tensor<S>& b) {
  check_same_shape(a.shape(), b.shape(), "squared_difference");
  ArrayX<S> v = (a.value() - b.value()).square();
  return Tensor<S>::op(a.shape(), std::move(v), {a, b},
                       [an = a.node_, bn = b.node_](TensorNode<S>& self) {
                         ArrayX<S> d = S(2) * (an->value - bn->value);
                         if (an->requires_grad) an->accumulate_expr(self.grad * d);
                         if (bn->requires_grad) bn->accumulate_expr(-self.grad * d);
                       });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  ArrayX<S> v(1);
  v[0] = x.value().sum();
  return Tensor<S>::op(Shape{1}, std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad)
      xn->accumulate_expr(ArrayX<S>::Constant(xn->value.size(), self.grad[0]));
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  ArrayX<S> v(1);
  v[0] = x.value().mean();
  return Tensor<S>::op(Shape{1}, std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad)
      xn->accumulate_expr(
          ArrayX<S>::Constant(xn->value.size(), self.grad[0] / S(xn->value.size())));
  });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, const Shape& shape) {
  if (shape.numel() != x.numel())
    throw ShapeMismatch("reshape: " + x.shape().str() + " to " + shape.str());
  ArrayX<S> v = x.value();
  return Tensor<S>::op(shape, std::move(v), {x}, [xn = x.node_](TensorNode<S>& self) {
    if (xn->requires_grad) xn->accumulate(self.grad);
  });
}

/// Collapse all trailing dims: {N, ...} -> {N, rest}.
template <typename S>
Tensor<S> flatten(const Tensor<S>& x) {
  const int n = x.shape().rank() >= 2 ? x.shape()[0] : 1;
  return reshape(x, Shape{n, static_cast<int>(x.numel() / n)});
}

/// Concatenate two NCHW tensors along the channel axis.
template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != 4 || sb.rank() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw ShapeMismatch("concat_channels: " + sa.str() + " vs " + sb.str());
  const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const long hw = static_cast<long>(H) * W;
  ArrayX<S> v(static_cast<long>(N) * (Ca + Cb) * hw);
  for (int n = 0; n < N; ++n) {
    std::copy_n(a.value().data() + n * Ca * hw, Ca * hw, v.data() + n * (Ca + Cb) * hw);
    std::copy_n(b.value().data() + n * Cb * hw, Cb * hw, v.data() + n * (Ca + Cb) * hw + Ca * hw);
  }
  return Tensor<S>::op(
      Shape{N, Ca + Cb, H, W}, std::move(v), {a, b},
      [an = a.node_, bn = b.node_, N, Ca, Cb, hw](TensorNode<S>& self) {
        if (an->requires_grad) {
          S* ga = detail::ensure_grad(*an);
          for (int n = 0; n < N; ++n)
            for (long i = 0; i < Ca * hw; ++i)
              ga[n * Ca * hw + i] += self.grad[n * (Ca + Cb) * hw + i];
        }
        if (bn->requires_grad) {
          S* gb = detail::ensure_grad(*bn);
          for (int n = 0; n < N; ++n)
            for (long i = 0; i < Cb * hw; ++i)
              gb[n * Cb * hw + i] += self.grad[n * (Ca + Cb) * hw + Ca * hw + i];
        }
      });
}

/// 2D convolution over NCHW input; weight is {Cout, Cin, kh, kw}, bias {Cout}
/// (optional: pass a default-constructed Tensor). Realized as per-sample
/// im2col + GEMM; the backward pass rebuilds the columns instead of caching.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride, int pad) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.rank() != 4 || sw.rank() != 4)
    throw ShapeMismatch("conv2d: input " + sx.str() + ", weight " + sw.str());
  if (sx[1] != sw[1])
    throw ShapeMismatch("conv2d: input channels " + sx.str() + " vs weight " + sw.str());
  if (stride < 1 || pad < 0) throw InvalidInput("conv2d: stride must be >= 1 and pad >= 0");
  const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
  const int Cout = sw[0], kh = sw[2], kw = sw[3];
  const bool has_bias = b.defined();
  if (has_bias && (b.shape().rank() != 1 || b.shape()[0] != Cout))
    throw ShapeMismatch("conv2d: bias " + b.shape().str() + " vs weight " + sw.str());
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw InvalidInput("conv2d: kernel larger than padded input");

  const int ckk = C * kh * kw;
  const long span = static_cast<long>(Ho) * Wo;
  ArrayX<S> out(static_cast<long>(N) * Cout * span);
  {
    MatrixRM<S> cols(ckk, span);
    Eigen::Map<const MatrixRM<S>> wm(w.value().data(), Cout, ckk);
    for (int n = 0; n < N; ++n) {
      detail::im2col(x.value().data() + static_cast<long>(n) * C * H * W, C, H, W, kh, kw, stride,
                     pad, Ho, Wo, cols.data());
      Eigen::Map<MatrixRM<S>> on(out.data() + static_cast<long>(n) * Cout * span, Cout, span);
      on.noalias() = wm * cols;
      if (has_bias)
        on.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(b.value().data(),
                                                                              Cout);
    }
  }

  std::vector<Tensor<S>> parents = has_bias ? std::vector<Tensor<S>>{x, w, b}
                                            : std::vector<Tensor<S>>{x, w};
  auto bn = has_bias ? b.node_ : nullptr;
  return Tensor<S>::op(
      Shape{N, Cout, Ho, Wo}, std::move(out), parents,
      [xn = x.node_, wn = w.node_, bn, N, C, H, W, Cout, kh, kw, stride, pad, Ho, Wo, ckk,
       span](TensorNode<S>& self) {
        MatrixRM<S> cols(ckk, span);
        MatrixRM<S> gcols(ckk, span);
        Eigen::Map<const MatrixRM<S>> wm(wn->value.data(), Cout, ckk);
        const bool need_x = xn->requires_grad;
        const bool need_w = wn->requires_grad;
        const bool need_b = bn && bn->requires_grad;
        S* gx = need_x ? detail::ensure_grad(*xn) : nullptr;
        S* gw = need_w ? detail::ensure_grad(*wn) : nullptr;
        S* gb = need_b ? detail::ensure_grad(*bn) : nullptr;
        for (int n = 0; n < N; ++n) {
          Eigen::Map<const MatrixRM<S>> gon(self.grad.data() + static_cast<long>(n) * Cout * span,
                                            Cout, span);
          if (need_w || need_x)
            detail::im2col(xn->value.data() + static_cast<long>(n) * C * H * W, C, H, W, kh, kw,
                           stride, pad, Ho, Wo, cols.data());
          if (need_w) {
            Eigen::Map<MatrixRM<S>> gwm(gw, Cout, ckk);
            gwm.noalias() += gon * cols.transpose();
          }
          if (need_b) {
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gbm(gb, Cout);
            gbm.noalias() += gon.rowwise().sum();
          }
          if (need_x) {
            gcols.noalias() = wm.transpose() * gon;
            detail::col2im_add(gcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                               gx + static_cast<long>(n) * C * H * W);
          }
        }
      });
}

/// Nearest-neighbour 2x spatial upsampling of an NCHW tensor.
template <typename S>
Tensor<S> upsample_nearest2(const Tensor<S>& x) {
  const Shape& sx = x.shape();
  if (sx.rank() != 4) throw ShapeMismatch("upsample_nearest2: " + sx.str());
  const int N = sx[0], C = sx[1], H = sx[2], W = sx[3];
  const int Ho = 2 * H, Wo = 2 * W;
  ArrayX<S> out(static_cast<long>(N) * C * Ho * Wo);
  const S* src = x.value().data();
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const S* in = src + nc * H * W;
    S* o = out.data() + nc * Ho * Wo;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        const S v = in[i * W + j];
        o[(2 * i) * Wo + 2 * j] = v;
        o[(2 * i) * Wo + 2 * j + 1] = v;
        o[(2 * i + 1) * Wo + 2 * j] = v;
        o[(2 * i + 1) * Wo + 2 * j + 1] = v;
      }
    }
  }
  return Tensor<S>::op(Shape{N, C, Ho, Wo}, std::move(out), {x},
                       [xn = x.node_, N, C, H, W, Ho, Wo](TensorNode<S>& self) {
                         if (!xn->requires_grad) return;
                         S* gx = detail::ensure_grad(*xn);
                         const S* g = self.grad.data();
                         for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
                           const S* gi = g + nc * Ho * Wo;
                           S* go = gx + nc * H * W;
                           for (int i = 0; i < H; ++i)
                             for (int j = 0; j < W; ++j)
                               go[i * W + j] += gi[(2 * i) * Wo + 2 * j] +
                                                gi[(2 * i) * Wo + 2 * j + 1] +
                                                gi[(2 * i + 1) * Wo + 2 * j] +
                                                gi[(2 * i + 1) * Wo + 2 * j + 1];
                         }
                       });
}

/// Per-sample cosine similarity over flattened vectors. Rank-1 inputs are a
/// single sample; otherwise dim 0 is the batch. Output shape is {N}.
/// Denominator carries +eps so all-zero features yield similarity 0.
template <typename S>
Tensor<S> cosine_similarity(const Tensor<S>& a, const Tensor<S>& b, S eps = S(1e-8)) {
  check_same_shape(a.shape(), b.shape(), "cosine_similarity");
  const int N = a.shape().rank() >= 2 ? a.shape()[0] : 1;
  const long len = a.numel() / N;
  ArrayX<S> out(N);
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const ArrayX<S>> av(a.value().data() + n * len, len);
    Eigen::Map<const ArrayX<S>> bv(b.value().data() + n * len, len);
    const S s = (av * bv).sum();
    const S d = std::sqrt(av.square().sum()) * std::sqrt(bv.square().sum()) + eps;
    out[n] = s / d;
  }
  return Tensor<S>::op(
      Shape{N}, std::move(out), {a, b},
      [an = a.node_, bn = b.node_, N, len, eps](TensorNode<S>& self) {
        for (int n = 0; n < N; ++n) {
          const S g = self.grad[n];
          if (g == S(0)) continue;
          Eigen::Map<const ArrayX<S>> av(an->value.data() + n * len, len);
          Eigen::Map<const ArrayX<S>> bv(bn->value.data() + n * len, len);
          const S s = (av * bv).sum();
          const S na = std::sqrt(av.square().sum());
          const S nb = std::sqrt(bv.square().sum());
          const S d = na * nb + eps;
          // d cos / da_i = b_i/d - s*nb*a_i/(na*d^2); the norm term is dropped
          // at na == 0 (subgradient convention at the degenerate point).
          if (an->requires_grad) {
            S* ga = detail::ensure_grad(*an) + n * len;
            const S k = na > S(0) ? s * nb / (na * d * d) : S(0);
            for (long i = 0; i < len; ++i) ga[i] += g * (bv[i] / d - k * av[i]);
          }
          if (bn->requires_grad) {
            S* gb = detail::ensure_grad(*bn) + n * len;
            const S k = nb > S(0) ? s * na / (nb * d * d) : S(0);
            for (long i = 0; i < len; ++i) gb[i] += g * (av[i] / d - k * bv[i]);
          }
        }
      });
}

/// Clamp values to [0,1]. Plain value transform used at scoring and export
/// time; never part of the training graph.
template <typename S>
ArrayX<S> clamp01(const ArrayX<S>& v) {
  return v.min(S(1)).max(S(0));
}

/// Names of the differentiable operations this layer provides.
inline std::vector<std::string> required_ops() {
  return {"conv2d_stride1", "conv2d_stride2", "upsample_nearest2_conv", "relu",
          "sigmoid",        "add",            "sub",                    "mul",
          "concat_channels", "mean",          "sum",                    "abs",
          "squared_difference", "flatten",    "cosine_similarity"};
}

}  // namespace amsrc
