#include "cain/arch.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace cain {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

LayerSpec parse_token(const std::string& raw) {
  std::string tok = trim(raw);
  check(!tok.empty(), "parse_arch: empty token");
  std::string low = lower(tok);

  LayerSpec l;
  if (low.rfind("resize", 0) == 0) {
    l.kind = LayerSpec::Kind::kResize;
    return l;
  }
  if (low == "clip") {
    l.kind = LayerSpec::Kind::kClip;
    return l;
  }
  if (low.find("attention") != std::string::npos) {
    l.kind = LayerSpec::Kind::kAttention;
    return l;
  }
  if (low == "concat") {
    l.kind = LayerSpec::Kind::kConcat;
    return l;
  }
  if (low.rfind("fc", 0) == 0) {
    l.kind = LayerSpec::Kind::kFc;
    std::string num = tok.substr(2);
    check(!num.empty(), "parse_arch: FC token needs an output size: " + tok);
    l.channels = std::stoll(num);
    check(l.channels >= 1, "parse_arch: FC output must be positive: " + tok);
    return l;
  }

  // conv token: letter-number pairs
  l.kind = LayerSpec::Kind::kConv;
  bool saw_k = false, saw_c = false;
  size_t i = 0;
  while (i < tok.size()) {
    char key = static_cast<char>(std::toupper(static_cast<unsigned char>(tok[i])));
    ++i;
    size_t j = i;
    while (j < tok.size() && std::isdigit(static_cast<unsigned char>(tok[j])))
      ++j;
    check(j > i, "parse_arch: expected digits after '" + std::string(1, key) +
                     "' in token: " + tok);
    int64_t v = std::stoll(tok.substr(i, j - i));
    i = j;
    switch (key) {
      case 'K':
        l.kernel = v;
        saw_k = true;
        break;
      case 'S':
        l.stride = v;
        break;
      case 'D':
        l.dilation = v;
        break;
      case 'C':
        l.channels = v;
        saw_c = true;
        break;
      default:
        throw Error("parse_arch: unknown key '" + std::string(1, key) +
                    "' in token: " + tok);
    }
  }
  check(saw_k && saw_c, "parse_arch: conv token needs K and C: " + tok);
  check(l.kernel >= 1 && l.kernel % 2 == 1,
        "parse_arch: kernel must be odd and positive: " + tok);
  check(l.stride >= 1 && l.dilation >= 1 && l.channels >= 1,
        "parse_arch: bad conv geometry: " + tok);
  return l;
}

}  // namespace

std::vector<LayerSpec> parse_arch(const std::string& text) {
  std::vector<LayerSpec> out;
  size_t start = 0;
  while (start <= text.size()) {
    size_t dash = text.find('-', start);
    std::string piece = dash == std::string::npos
                            ? text.substr(start)
                            : text.substr(start, dash - start);
    if (!trim(piece).empty()) out.push_back(parse_token(piece));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  check(!out.empty(), "parse_arch: no layers in: " + text);
  return out;
}

std::string format_arch(const std::vector<LayerSpec>& layers) {
  std::ostringstream os;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) os << " - ";
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerSpec::Kind::kConv:
        os << "K" << l.kernel;
        if (l.dilation != 1) os << "D" << l.dilation;
        os << "S" << l.stride << "C" << l.channels;
        break;
      case LayerSpec::Kind::kResize:
        os << "resize";
        break;
      case LayerSpec::Kind::kClip:
        os << "clip";
        break;
      case LayerSpec::Kind::kAttention:
        os << "attention";
        break;
      case LayerSpec::Kind::kConcat:
        os << "concat";
        break;
      case LayerSpec::Kind::kFc:
        os << "FC" << l.channels;
        break;
    }
  }
  return os.str();
}

std::string default_encoder_decoder() {
  return "K5S1C32 - K3S2C64 - K3S1C64 - K3S2C128 - K3S1C128 - K3S1C128 - "
         "K3D2S1C128 - K3D4S1C128 - K3D8S1C128 - K3D16S1C128 - K3S1C128 - "
         "K3S1C128 - resize - K3S1C64 - K3S1C64 - resize - K3S1C32 - "
         "K3S1C16 - K3S1C3 - clip";
}

// Half the trunk width: the branch adds matching context features without
// doubling the decoder input, keeping the whole generator near the trunk's
// parameter budget.
std::string default_attention_branch() {
  return "K5S1C16 - K3S2C32 - K3S1C32 - K3S2C64 - K3S1C64 - K3S1C64 - "
         "attention - K3S1C64 - K3S1C64 - concat";
}

std::string default_critic_global() {
  return "K5S2C64 - K5S2C128 - K5S2C256 - K5S2C256 - FC1";
}

std::string default_critic_local() {
  return "K5S2C64 - K5S2C128 - K5S2C256 - K5S2C512 - FC1";
}

namespace {

// Channel scaling: the image-output conv (C3 ahead of clip) and FC heads
// keep their sizes; everything else must stay at least 4 channels wide.
void scale_channels(std::vector<LayerSpec>& layers, double multiplier) {
  for (size_t i = 0; i < layers.size(); ++i) {
    LayerSpec& l = layers[i];
    if (l.kind != LayerSpec::Kind::kConv) continue;
    bool is_output = i + 1 < layers.size() &&
                     layers[i + 1].kind == LayerSpec::Kind::kClip;
    if (is_output) continue;
    int64_t scaled = static_cast<int64_t>(
        std::llround(static_cast<double>(l.channels) * multiplier));
    check(scaled >= 4, "default_arch: multiplier " + std::to_string(multiplier) +
                           " shrinks a " + std::to_string(l.channels) +
                           "-channel layer below 4");
    l.channels = scaled;
  }
}

// Caps dilations so reflection padding (pad = dilation for K3) stays
// strictly inside the bottleneck feature map.
void cap_dilations(std::vector<LayerSpec>& layers, int64_t bottleneck) {
  int64_t cap = std::max<int64_t>(1, bottleneck / 2);
  for (LayerSpec& l : layers)
    if (l.kind == LayerSpec::Kind::kConv && l.dilation > cap) l.dilation = cap;
}

}  // namespace

void ArchSpec::validate() const {
  check(multiplier > 0, "ArchSpec: multiplier must be positive");
  check(image_size >= 8 && image_size % 4 == 0,
        "ArchSpec: image_size must be a positive multiple of 4, got " +
            std::to_string(image_size));
  check(local_size >= 8 && local_size <= image_size,
        "ArchSpec: local_size must lie in [8, image_size], got " +
            std::to_string(local_size));
  check(!coarse.empty() && !refine_conv.empty() && !refine_attn.empty() &&
            !decoder.empty() && !critic_global.empty() &&
            !critic_local.empty(),
        "ArchSpec: all six layer lists are required");
  check(critic_global.back().kind == LayerSpec::Kind::kFc &&
            critic_local.back().kind == LayerSpec::Kind::kFc,
        "ArchSpec: critics must end in a fully-connected head");
  attn.validate();
}

ArchSpec default_arch(double multiplier, int64_t image_size,
                      int64_t local_size) {
  ArchSpec a;
  a.multiplier = multiplier;
  a.image_size = image_size;
  a.local_size = local_size;

  std::vector<LayerSpec> trunk = parse_arch(default_encoder_decoder());
  std::vector<LayerSpec> branch = parse_arch(default_attention_branch());

  a.coarse = trunk;

  // split the trunk into the stage-two conv encoder and the shared decoder
  size_t first_resize = 0;
  while (first_resize < trunk.size() &&
         trunk[first_resize].kind != LayerSpec::Kind::kResize)
    ++first_resize;
  check(first_resize < trunk.size(), "default_arch: trunk has no decoder");
  a.refine_conv.assign(trunk.begin(),
                       trunk.begin() + static_cast<int64_t>(first_resize));
  a.decoder.assign(trunk.begin() + static_cast<int64_t>(first_resize),
                   trunk.end());

  // drop the trailing concat marker: it only documents the merge point
  check(branch.back().kind == LayerSpec::Kind::kConcat,
        "default_arch: attention branch must end in concat");
  branch.pop_back();
  a.refine_attn = branch;

  a.critic_global = parse_arch(default_critic_global());
  a.critic_local = parse_arch(default_critic_local());

  scale_channels(a.coarse, multiplier);
  scale_channels(a.refine_conv, multiplier);
  scale_channels(a.refine_attn, multiplier);
  scale_channels(a.decoder, multiplier);
  scale_channels(a.critic_global, multiplier);
  scale_channels(a.critic_local, multiplier);

  int64_t bottleneck = image_size / 4;
  cap_dilations(a.coarse, bottleneck);
  cap_dilations(a.refine_conv, bottleneck);
  cap_dilations(a.refine_attn, bottleneck);

  a.validate();
  return a;
}

int64_t receptive_growth(const std::vector<LayerSpec>& layers) {
  int64_t total = 0;
  for (const LayerSpec& l : layers)
    if (l.kind == LayerSpec::Kind::kConv)
      total += l.dilation * (l.kernel - 1);
  return total;
}

}  // namespace cain
