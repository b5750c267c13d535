#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cain/arch.h"
#include "cain/attention.h"
#include "cain/conv.h"
#include "cain/masking.h"
#include "cain/ops.h"
#include "cain/rng.h"

namespace cain {

template <typename T>
struct ConvLayer {
  LayerSpec spec;
  Tensor<T> w;  // (co, ci, k, k)
  Tensor<T> b;  // (1, co, 1, 1)
};

template <typename T>
struct FcLayer {
  int64_t in_features = 0;
  Tensor<T> w;  // (out, in)
  Tensor<T> b;  // (1, out)
};

namespace detail {

// Fan-in-scaled uniform weights (variance 1/fan_in), zero biases.
template <typename T>
ConvLayer<T> make_conv(const LayerSpec& spec, int64_t in_channels, Rng& rng) {
  ConvLayer<T> l;
  l.spec = spec;
  int64_t fan_in = in_channels * spec.kernel * spec.kernel;
  double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  l.w = Tensor<T>::uniform({spec.channels, in_channels, spec.kernel,
                            spec.kernel},
                           rng, static_cast<T>(-limit), static_cast<T>(limit));
  l.b = Tensor<T>::zeros({1, spec.channels, 1, 1});
  l.w.set_requires_grad(true);
  l.b.set_requires_grad(true);
  return l;
}

template <typename T>
FcLayer<T> make_fc(int64_t in_features, int64_t out_features, Rng& rng) {
  FcLayer<T> l;
  l.in_features = in_features;
  double limit = std::sqrt(3.0 / static_cast<double>(in_features));
  l.w = Tensor<T>::uniform({out_features, in_features}, rng,
                           static_cast<T>(-limit), static_cast<T>(limit));
  l.b = Tensor<T>::zeros({1, out_features});
  l.w.set_requires_grad(true);
  l.b.set_requires_grad(true);
  return l;
}

// Builds the conv layers of one stack, tracking channel and spatial dims.
// Non-conv tokens advance the spatial bookkeeping only.
template <typename T>
std::vector<ConvLayer<T>> build_stack(const std::vector<LayerSpec>& specs,
                                      int64_t in_channels, Rng& rng) {
  std::vector<ConvLayer<T>> out;
  int64_t c = in_channels;
  for (const LayerSpec& s : specs) {
    if (s.kind != LayerSpec::Kind::kConv) continue;
    out.push_back(make_conv<T>(s, c, rng));
    c = s.channels;
  }
  return out;
}

inline int64_t conv_out_dim(int64_t h, const LayerSpec& s) {
  int64_t p = s.dilation * (s.kernel - 1) / 2;
  return (h + 2 * p - s.dilation * (s.kernel - 1) - 1) / s.stride + 1;
}

}  // namespace detail

// Two-stage inpainting generator: a coarse encoder-decoder, then a
// refinement stage whose dilated-conv and attention encoders run in
// parallel and feed one shared decoder. All convs reflect-pad; every
// activation is ELU except the clipped 3-channel outputs.
template <typename T>
class GeneratorModel {
 public:
  struct Forward {
    Tensor<T> coarse;   // stage-1 image, clipped to [-1,1]
    Tensor<T> refined;  // stage-2 image, clipped to [-1,1]
    // per-sample attention maps (empty when attention is disabled)
    std::vector<AttentionScores<T>> scores;
  };

  GeneratorModel(const ArchSpec& arch, uint64_t seed) : arch_(arch) {
    arch_.validate();
    Rng rng(seed, /*stream=*/17);
    coarse_ = detail::build_stack<T>(arch_.coarse, 4, rng);
    refine_conv_ = detail::build_stack<T>(arch_.refine_conv, 4, rng);
    refine_attn_ = detail::build_stack<T>(arch_.refine_attn, 4, rng);
    int64_t merged = refine_conv_.back().spec.channels +
                     refine_attn_.back().spec.channels;
    decoder_ = detail::build_stack<T>(arch_.decoder, merged, rng);
  }

  const ArchSpec& arch() const { return arch_; }

  // z: corrupted image in [-1,1], holes already zeroed. m: binary mask,
  // (n,1,h,w) or (1,1,h,w), 1 = known.
  Forward forward(const Tensor<T>& z, const Tensor<T>& m) const {
    check(z.rank() == 4 && z.dim(1) == 3,
          "generator: z must be (n,3,h,w), got " + shape_str(z.dims()));
    check(m.rank() == 4 && m.dim(1) == 1,
          "generator: m must be (n,1,h,w), got " + shape_str(m.dims()));
    check(z.dim(2) == arch_.image_size && z.dim(3) == arch_.image_size,
          "generator: input is " + shape_str(z.dims()) + " but the model "
          "was built for " + std::to_string(arch_.image_size));
    int64_t n = z.dim(0);
    Tensor<T> mb = m.dim(0) == n
                       ? m
                       : broadcast_to(m, Shape{n, 1, m.dim(2), m.dim(3)});

    Forward f;
    Tensor<T> in1 = concat_channels(z, mb);
    f.coarse = run_stack(coarse_, arch_.coarse, in1);

    Tensor<T> x2 = complete(z, f.coarse, mb);
    Tensor<T> in2 = concat_channels(x2, mb);
    Tensor<T> conv_feat = run_stack(refine_conv_, arch_.refine_conv, in2);
    Tensor<T> attn_feat = run_attention_branch(in2, mb, &f.scores);
    Tensor<T> merged = concat_channels(conv_feat, attn_feat);
    f.refined = run_stack(decoder_, arch_.decoder, merged);
    return f;
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    auto emit = [&](const char* prefix,
                    const std::vector<ConvLayer<T>>& layers) {
      for (size_t i = 0; i < layers.size(); ++i) {
        std::string base = std::string(prefix) + "." + std::to_string(i);
        out.emplace_back(base + ".w", layers[i].w);
        out.emplace_back(base + ".b", layers[i].b);
      }
    };
    emit("coarse", coarse_);
    emit("refine_conv", refine_conv_);
    emit("refine_attn", refine_attn_);
    emit("decoder", decoder_);
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  bool all_parameters_finite() const {
    for (const auto& [name, t] : named_parameters())
      if (!all_finite(t)) return false;
    return true;
  }

 private:
  // Runs a layer list over its conv parameters. A conv followed by `clip`
  // stays linear; the clip token then bounds it. Everything else gets ELU.
  Tensor<T> run_stack(const std::vector<ConvLayer<T>>& convs,
                      const std::vector<LayerSpec>& specs,
                      Tensor<T> x) const {
    size_t ci = 0;
    for (size_t i = 0; i < specs.size(); ++i) {
      const LayerSpec& s = specs[i];
      switch (s.kind) {
        case LayerSpec::Kind::kConv: {
          const ConvLayer<T>& l = convs[ci++];
          x = add(conv2d(x, l.w, s.stride, s.dilation, PaddingMode::kReflect),
                  l.b);
          bool before_clip = i + 1 < specs.size() &&
                             specs[i + 1].kind == LayerSpec::Kind::kClip;
          if (!before_clip) x = elu(x);
          break;
        }
        case LayerSpec::Kind::kResize:
          x = nearest_up(x, 2);
          break;
        case LayerSpec::Kind::kClip:
          x = clip(x, T(-1), T(1));
          break;
        case LayerSpec::Kind::kAttention:
          throw Error("generator: attention token outside the branch runner");
        case LayerSpec::Kind::kConcat:
        case LayerSpec::Kind::kFc:
          throw Error("generator: unexpected token in a generator stack");
      }
    }
    check(ci == convs.size(), "generator: layer bookkeeping out of sync");
    return x;
  }

  // The parallel encoder: convs to the bottleneck, contextual attention on
  // its own features (per sample, mask at feature resolution), then the
  // trailing convs. With attention disabled the features pass through.
  Tensor<T> run_attention_branch(
      const Tensor<T>& in, const Tensor<T>& mb,
      std::vector<AttentionScores<T>>* scores) const {
    const std::vector<LayerSpec>& specs = arch_.refine_attn;
    size_t attn_at = 0;
    while (attn_at < specs.size() &&
           specs[attn_at].kind != LayerSpec::Kind::kAttention)
      ++attn_at;
    check(attn_at < specs.size(),
          "generator: attention branch lacks an attention token");

    std::vector<LayerSpec> pre(specs.begin(),
                               specs.begin() + static_cast<int64_t>(attn_at));
    std::vector<LayerSpec> post(
        specs.begin() + static_cast<int64_t>(attn_at) + 1, specs.end());
    size_t pre_convs = 0;
    for (const LayerSpec& s : pre)
      if (s.kind == LayerSpec::Kind::kConv) ++pre_convs;

    std::vector<ConvLayer<T>> head(refine_attn_.begin(),
                                   refine_attn_.begin() +
                                       static_cast<int64_t>(pre_convs));
    std::vector<ConvLayer<T>> tail(refine_attn_.begin() +
                                       static_cast<int64_t>(pre_convs),
                                   refine_attn_.end());

    Tensor<T> x = run_stack(head, pre, in);

    if (arch_.attention_enabled) {
      int64_t factor = mb.dim(2) / x.dim(2);
      check(factor >= 1 && mb.dim(2) == factor * x.dim(2) &&
                mb.dim(3) == factor * x.dim(3),
            "generator: mask does not downscale to the feature grid");
      int64_t n = x.dim(0);
      std::vector<Tensor<T>> outs;
      outs.reserve(n);
      for (int64_t i = 0; i < n; ++i) {
        Tensor<T> xi = n == 1 ? x : slice_batch(x, i, i + 1);
        Tensor<T> mi = mb.dim(0) == 1 ? mb : slice_batch(mb, i, i + 1);
        Tensor<T> mf = factor == 1 ? mi : nearest_down(mi, factor);
        AttentionResult<T> r = contextual_attention(xi, xi, mf, arch_.attn);
        outs.push_back(r.output);
        if (scores) scores->push_back(std::move(r.scores));
      }
      x = n == 1 ? outs[0] : concat_batch(outs);
    }

    return run_stack(tail, post, x);
  }

  ArchSpec arch_;
  std::vector<ConvLayer<T>> coarse_, refine_conv_, refine_attn_, decoder_;
};

// WGAN critic: zero-padded stride-2 convs with leaky-ReLU(0.2), flattened
// into an affine head producing one unbounded score per sample. The head
// fixes the input spatial size.
template <typename T>
class CriticModel {
 public:
  CriticModel(const std::vector<LayerSpec>& specs, int64_t input_size,
              int64_t in_channels, uint64_t seed)
      : specs_(specs), input_size_(input_size) {
    check(!specs.empty() && specs.back().kind == LayerSpec::Kind::kFc,
          "critic: layer list must end in a fully-connected head");
    Rng rng(seed, /*stream=*/23);
    int64_t c = in_channels, h = input_size;
    for (size_t i = 0; i + 1 < specs.size(); ++i) {
      const LayerSpec& s = specs[i];
      check(s.kind == LayerSpec::Kind::kConv,
            "critic: only conv layers may precede the head");
      convs_.push_back(detail::make_conv<T>(s, c, rng));
      c = s.channels;
      h = detail::conv_out_dim(h, s);
      check(h >= 1, "critic: feature map collapsed below 1x1");
    }
    head_ = detail::make_fc<T>(c * h * h, specs.back().channels, rng);
  }

  int64_t input_size() const { return input_size_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    check(x.rank() == 4 && x.dim(1) == 3,
          "critic: input must be (n,3,h,w), got " + shape_str(x.dims()));
    check(x.dim(2) == input_size_ && x.dim(3) == input_size_,
          "critic: input is " + shape_str(x.dims()) + " but the head was "
          "built for " + std::to_string(input_size_) + "x" +
              std::to_string(input_size_));
    Tensor<T> h = x;
    for (const ConvLayer<T>& l : convs_) {
      h = add(conv2d(h, l.w, l.spec.stride, l.spec.dilation,
                     PaddingMode::kZero),
              l.b);
      h = leaky_relu(h, T(0.2));
    }
    return affine(flatten(h), head_.w, head_.b);  // (n, 1)
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (size_t i = 0; i < convs_.size(); ++i) {
      std::string base = "conv." + std::to_string(i);
      out.emplace_back(base + ".w", convs_[i].w);
      out.emplace_back(base + ".b", convs_[i].b);
    }
    out.emplace_back("fc.w", head_.w);
    out.emplace_back("fc.b", head_.b);
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  bool all_parameters_finite() const {
    for (const auto& [name, t] : named_parameters())
      if (!all_finite(t)) return false;
    return true;
  }

 private:
  std::vector<LayerSpec> specs_;
  int64_t input_size_ = 0;
  std::vector<ConvLayer<T>> convs_;
  FcLayer<T> head_;
};

}  // namespace cain
