#pragma once

#include <string>
#include <vector>

#include "cain/attention.h"
#include "cain/common.h"

namespace cain {

// One token of the layer grammar: convs carry K/S/D/C, the rest are
// structural markers.
struct LayerSpec {
  enum class Kind { kConv, kResize, kClip, kAttention, kConcat, kFc };

  Kind kind = Kind::kConv;
  int64_t kernel = 3;
  int64_t stride = 1;
  int64_t dilation = 1;
  int64_t channels = 0;  // output channels (conv) or output features (fc)

  bool operator==(const LayerSpec& o) const = default;
};

// Parses "K5S1C32 - K3D2S1C128 - resize - clip - attention - concat - FC1".
// Tokens are separated by '-'; K/D/S/C prefixes may appear in any order
// within a conv token.
std::vector<LayerSpec> parse_arch(const std::string& text);

std::string format_arch(const std::vector<LayerSpec>& layers);

// Full structural description of the generator and both critics.
struct ArchSpec {
  double multiplier = 0.25;
  int64_t image_size = 64;
  int64_t local_size = 32;  // fixed crop the local critic consumes
  bool attention_enabled = true;
  AttentionConfig attn;

  std::vector<LayerSpec> coarse;       // full encoder-decoder
  std::vector<LayerSpec> refine_conv;  // dilated encoder of stage two
  std::vector<LayerSpec> refine_attn;  // parallel encoder around attention
  std::vector<LayerSpec> decoder;      // shared decoder after concat
  std::vector<LayerSpec> critic_global;
  std::vector<LayerSpec> critic_local;

  void validate() const;
};

// Reference layer schedules at multiplier 1.0, before channel scaling.
std::string default_encoder_decoder();
std::string default_attention_branch();
std::string default_critic_global();
std::string default_critic_local();

// Builds the default architecture: channels scaled by `multiplier` (≥ 4
// everywhere except the 3-channel image output and the critic heads),
// dilations capped so reflection padding fits the bottleneck feature map.
ArchSpec default_arch(double multiplier, int64_t image_size,
                      int64_t local_size);

// One-sided kernel reach of a conv stack, summed: how far a single output
// pixel sees in each direction. Used to sanity-check the dilated block.
int64_t receptive_growth(const std::vector<LayerSpec>& layers);

}  // namespace cain
