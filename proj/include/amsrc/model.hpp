#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "amsrc/ops.hpp"
#include "amsrc/rng.hpp"
#include "amsrc/tensor.hpp"

namespace amsrc {

enum class Variant : std::uint8_t {
  Amsrc = 0,          // gated fusion of both streams
  NoGatedFusion = 1,  // both streams, fused by elementwise sum
  FrameOnly = 2,      // frame stream and decoder only (ablation baseline)
};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Amsrc: return "amsrc";
    case Variant::NoGatedFusion: return "no_gated_fusion";
    case Variant::FrameOnly: return "frame_only";
  }
  throw InvalidInput("unknown variant");
}

inline Variant variant_from_name(const std::string& s) {
  if (s == "amsrc") return Variant::Amsrc;
  if (s == "no_gated_fusion") return Variant::NoGatedFusion;
  if (s == "frame_only") return Variant::FrameOnly;
  throw InvalidConfig("unknown model variant '" + s + "'");
}

struct ArchConfig {
  int window = 4;  // t: frames of motion history per STC
  int patch = 32;
  std::vector<int> channels = {32, 64, 128};  // per encoder block
  Variant variant = Variant::Amsrc;

  int blocks() const { return static_cast<int>(channels.size()); }
  int frame_in_channels() const { return window; }
  int flow_in_channels() const { return 2 * window; }
  bool has_flow_stream() const { return variant != Variant::FrameOnly; }
  int bottleneck_size() const { return patch >> blocks(); }

  void validate() const {
    if (window < 1) throw InvalidConfig("window must be >= 1");
    if (channels.empty()) throw InvalidConfig("at least one encoder block is required");
    for (int c : channels)
      if (c < 1) throw InvalidConfig("channel counts must be positive");
    if (patch < (1 << blocks()) || patch % (1 << blocks()) != 0)
      throw InvalidConfig("patch size " + std::to_string(patch) + " is not divisible by 2^" +
                          std::to_string(blocks()));
  }

  bool operator==(const ArchConfig& o) const = default;
};

template <typename S>
struct Param {
  std::string name;
  bool is_weight = true;  // false for biases (excluded from weight decay)
  Tensor<S> tensor;
};

/// sigma(fea_frame) * fea_flow + fea_frame, elementwise. Reactivates the
/// zero-valued entries of the appearance feature so that appearance-motion
/// disagreement perturbs the decoder input.
template <typename S>
Tensor<S> gated_fusion(const Tensor<S>& fea_frame, const Tensor<S>& fea_flow) {
  if (!fea_frame.defined() || !fea_flow.defined())
    throw InvalidInput("gated_fusion: undefined feature");
  if (fea_frame.shape() != fea_flow.shape())
    throw InvalidInput("gated_fusion: feature shapes differ, " + fea_frame.shape().str() +
                       " vs " + fea_flow.shape().str());
  return add(mul(sigmoid(fea_frame), fea_flow), fea_frame);
}

/// Two-stream encoder / gated fusion / decoder for next-patch prediction.
///
/// Encoder block: [3x3 conv, ReLU, 3x3 stride-2 conv, ReLU]; the post-ReLU
/// full-resolution activation of each frame-stream block is kept as a skip.
/// Both streams end in ReLU, so bottleneck features are nonnegative. The
/// decoder mirrors with nearest-upsample, skip concatenation and 3x3 convs,
/// ending in a linear 3x3 conv to one channel (no output nonlinearity).
template <typename S>
class AmsrcModel {
 public:
  AmsrcModel(ArchConfig arch, std::uint64_t init_seed) : arch_(std::move(arch)) {
    arch_.validate();
    Rng rng(init_seed);
    build(&rng);
  }

  explicit AmsrcModel(ArchConfig arch) : arch_(std::move(arch)) {
    arch_.validate();
    build(nullptr);
  }

  struct Output {
    Tensor<S> fea_frame;
    Tensor<S> fea_flow;  // undefined for the frame-only variant
    Tensor<S> fused;
    Tensor<S> prediction;  // {N,1,patch,patch}, unconstrained (clamp at scoring)
    std::vector<Tensor<S>> skips;
  };

  std::tuple<Tensor<S>, Tensor<S>, std::vector<Tensor<S>>> encode_two_stream(
      const Tensor<S>& frame_cube, const Tensor<S>& flow_cube) const {
    check_input(frame_cube, arch_.frame_in_channels(), "frame cube");
    std::vector<Tensor<S>> skips;
    Tensor<S> fea_frame = run_stream(frame_convs_, frame_cube, &skips);
    Tensor<S> fea_flow;
    if (arch_.has_flow_stream()) {
      check_input(flow_cube, arch_.flow_in_channels(), "flow cube");
      if (flow_cube.shape()[0] != frame_cube.shape()[0])
        throw InvalidInput("encode_two_stream: batch sizes differ, " + frame_cube.shape().str() +
                           " vs " + flow_cube.shape().str());
      fea_flow = run_stream(flow_convs_, flow_cube, nullptr);
    }
    return {fea_frame, fea_flow, skips};
  }

  Tensor<S> fuse(const Tensor<S>& fea_frame, const Tensor<S>& fea_flow) const {
    switch (arch_.variant) {
      case Variant::Amsrc: return gated_fusion(fea_frame, fea_flow);
      case Variant::NoGatedFusion: return add(fea_frame, fea_flow);
      case Variant::FrameOnly: return fea_frame;
    }
    throw InvalidInput("unknown variant");
  }

  Tensor<S> decode(const Tensor<S>& fused, const std::vector<Tensor<S>>& skips) const {
    const int B = arch_.blocks();
    if (static_cast<int>(skips.size()) != B)
      throw InvalidInput("decode: expected " + std::to_string(B) + " skips, got " +
                         std::to_string(skips.size()));
    const int N = fused.shape()[0];
    for (int i = 0; i < B; ++i) {
      const Shape expected{N, arch_.channels[static_cast<std::size_t>(i)], arch_.patch >> i,
                           arch_.patch >> i};
      if (skips[static_cast<std::size_t>(i)].shape() != expected)
        throw InvalidInput("decode: skip " + std::to_string(i) + " has shape " +
                           skips[static_cast<std::size_t>(i)].shape().str() + ", expected " +
                           expected.str());
    }
    Tensor<S> h = fused;
    for (int i = B - 1; i >= 0; --i) {
      h = upsample_nearest2(h);
      h = concat_channels(h, skips[static_cast<std::size_t>(i)]);
      h = relu(apply(dec_convs_[static_cast<std::size_t>(B - 1 - i)], h));
    }
    return apply(dec_convs_.back(), h);
  }

  Output forward(const Tensor<S>& frame_cube, const Tensor<S>& flow_cube) const {
    Output out;
    auto [fea_frame, fea_flow, skips] = encode_two_stream(frame_cube, flow_cube);
    out.fea_frame = fea_frame;
    out.fea_flow = fea_flow;
    out.skips = skips;
    out.fused = fuse(fea_frame, fea_flow);
    out.prediction = decode(out.fused, skips);
    return out;
  }

  const ArchConfig& arch() const { return arch_; }
  std::vector<Param<S>>& params() { return params_; }
  const std::vector<Param<S>>& params() const { return params_; }

  const Tensor<S>& param(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name == name) return p.tensor;
    throw InvalidInput("no parameter named '" + name + "'");
  }

 private:
  struct Conv {
    int w = -1;
    int b = -1;
    int stride = 1;
  };

  void check_input(const Tensor<S>& x, int channels, const char* what) const {
    if (!x.defined()) throw InvalidInput(std::string(what) + " is undefined");
    const Shape& s = x.shape();
    if (s.rank() != 4 || s[1] != channels || s[2] != arch_.patch || s[3] != arch_.patch)
      throw InvalidInput(std::string(what) + " has shape " + s.str() + ", expected Nx" +
                         std::to_string(channels) + "x" + std::to_string(arch_.patch) + "x" +
                         std::to_string(arch_.patch));
  }

  Tensor<S> apply(const Conv& c, const Tensor<S>& x) const {
    return conv2d(x, params_[static_cast<std::size_t>(c.w)].tensor,
                  params_[static_cast<std::size_t>(c.b)].tensor, c.stride, 1);
  }

  Tensor<S> run_stream(const std::vector<Conv>& convs, const Tensor<S>& input,
                       std::vector<Tensor<S>>* skips) const {
    Tensor<S> h = input;
    for (std::size_t i = 0; i < convs.size(); i += 2) {
      Tensor<S> a = relu(apply(convs[i], h));
      if (skips) skips->push_back(a);
      h = relu(apply(convs[i + 1], a));
    }
    return h;
  }

  Conv make_conv(const std::string& name, int cin, int cout, int stride, Rng* rng) {
    Conv c;
    c.stride = stride;
    const Shape wshape{cout, cin, 3, 3};
    ArrayX<S> w;
    if (rng) {
      // Fan-in-scaled uniform init; biases start at zero.
      const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * 9.0));
      w.resize(wshape.numel());
      for (long i = 0; i < w.size(); ++i) w[i] = static_cast<S>(rng->uniform(-bound, bound));
    } else {
      w = ArrayX<S>::Zero(wshape.numel());
    }
    c.w = static_cast<int>(params_.size());
    params_.push_back({name + ".w", true, Tensor<S>::leaf(wshape, std::move(w), true)});
    c.b = static_cast<int>(params_.size());
    params_.push_back({name + ".b", false, Tensor<S>::zeros(Shape{cout}, true)});
    return c;
  }

  void build(Rng* rng) {
    const int B = arch_.blocks();
    int cin = arch_.frame_in_channels();
    for (int i = 0; i < B; ++i) {
      const int c = arch_.channels[static_cast<std::size_t>(i)];
      frame_convs_.push_back(make_conv("frame_enc.b" + std::to_string(i) + ".conv1", cin, c, 1, rng));
      frame_convs_.push_back(make_conv("frame_enc.b" + std::to_string(i) + ".conv2", c, c, 2, rng));
      cin = c;
    }
    if (arch_.has_flow_stream()) {
      cin = arch_.flow_in_channels();
      for (int i = 0; i < B; ++i) {
        const int c = arch_.channels[static_cast<std::size_t>(i)];
        flow_convs_.push_back(make_conv("flow_enc.b" + std::to_string(i) + ".conv1", cin, c, 1, rng));
        flow_convs_.push_back(make_conv("flow_enc.b" + std::to_string(i) + ".conv2", c, c, 2, rng));
        cin = c;
      }
    }
    int running = arch_.channels.back();
    for (int i = B - 1; i >= 0; --i) {
      const int c = arch_.channels[static_cast<std::size_t>(i)];
      dec_convs_.push_back(
          make_conv("dec.up" + std::to_string(B - 1 - i) + ".conv", running + c, c, 1, rng));
      running = c;
    }
    dec_convs_.push_back(make_conv("dec.out", running, 1, 1, rng));
  }

  ArchConfig arch_;
  std::vector<Param<S>> params_;
  std::vector<Conv> frame_convs_;
  std::vector<Conv> flow_convs_;
  std::vector<Conv> dec_convs_;
};

}  // namespace amsrc
