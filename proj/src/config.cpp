#include "cain/config.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace cain {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    int64_t out = std::stoll(v, &used);
    check(used == v.size(), "trailing characters");
    return out;
  } catch (const std::exception&) {
    throw Error("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    uint64_t out = std::stoull(v, &used);
    check(used == v.size(), "trailing characters");
    return out;
  } catch (const std::exception&) {
    throw Error("config: '" + key + "' expects a non-negative integer, got '" +
                v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    check(used == v.size(), "trailing characters");
    return out;
  } catch (const std::exception&) {
    throw Error("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  std::string low = v;
  std::transform(low.begin(), low.end(), low.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (low == "true" || low == "yes" || low == "1") return true;
  if (low == "false" || low == "no" || low == "0") return false;
  throw Error("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct Entry {
  const char* key;  // "section.name"
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"train.image_size",
       [](TrainConfig& c, const std::string& v) {
         c.image_size = parse_int("train.image_size", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.image_size); }},
      {"train.hole",
       [](TrainConfig& c, const std::string& v) {
         c.hole_h = c.hole_w = parse_int("train.hole", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.hole_h); }},
      {"train.batch",
       [](TrainConfig& c, const std::string& v) {
         c.batch = parse_int("train.batch", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.batch); }},
      {"train.critic_steps",
       [](TrainConfig& c, const std::string& v) {
         c.critic_steps = parse_int("train.critic_steps", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.critic_steps); }},
      {"train.total_steps",
       [](TrainConfig& c, const std::string& v) {
         c.total_steps = parse_int("train.total_steps", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.total_steps); }},
      {"train.lr",
       [](TrainConfig& c, const std::string& v) {
         c.lr = parse_double("train.lr", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.lr); }},
      {"train.beta1",
       [](TrainConfig& c, const std::string& v) {
         c.beta1 = parse_double("train.beta1", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.beta1); }},
      {"train.beta2",
       [](TrainConfig& c, const std::string& v) {
         c.beta2 = parse_double("train.beta2", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.beta2); }},
      {"train.w_coarse_l1",
       [](TrainConfig& c, const std::string& v) {
         c.w_coarse_l1 = parse_double("train.w_coarse_l1", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.w_coarse_l1); }},
      {"train.w_refine_l1",
       [](TrainConfig& c, const std::string& v) {
         c.w_refine_l1 = parse_double("train.w_refine_l1", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.w_refine_l1); }},
      {"train.w_adv_global",
       [](TrainConfig& c, const std::string& v) {
         c.w_adv_global = parse_double("train.w_adv_global", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.w_adv_global); }},
      {"train.w_adv_local",
       [](TrainConfig& c, const std::string& v) {
         c.w_adv_local = parse_double("train.w_adv_local", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.w_adv_local); }},
      {"train.gamma",
       [](TrainConfig& c, const std::string& v) {
         c.gamma = parse_double("train.gamma", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.gamma); }},
      {"train.lambda_gp",
       [](TrainConfig& c, const std::string& v) {
         c.lambda_gp = parse_double("train.lambda_gp", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.lambda_gp); }},
      {"train.seed",
       [](TrainConfig& c, const std::string& v) {
         c.seed = parse_u64("train.seed", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.seed); }},
      {"train.ckpt_every",
       [](TrainConfig& c, const std::string& v) {
         c.ckpt_every = parse_int("train.ckpt_every", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.ckpt_every); }},
      {"train.sample_every",
       [](TrainConfig& c, const std::string& v) {
         c.sample_every = parse_int("train.sample_every", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.sample_every); }},
      {"arch.multiplier",
       [](TrainConfig& c, const std::string& v) {
         c.multiplier = parse_double("arch.multiplier", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.multiplier); }},
      {"arch.attention",
       [](TrainConfig& c, const std::string& v) {
         c.attention_enabled = parse_bool("arch.attention", v);
       },
       [](const TrainConfig& c) {
         return c.attention_enabled ? "true" : "false";
       }},
      {"attention.patch_size",
       [](TrainConfig& c, const std::string& v) {
         c.attn.patch_size = parse_int("attention.patch_size", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.attn.patch_size); }},
      {"attention.softmax_scale",
       [](TrainConfig& c, const std::string& v) {
         c.attn.softmax_scale = parse_double("attention.softmax_scale", v);
       },
       [](const TrainConfig& c) { return fmt_num(c.attn.softmax_scale); }},
      {"attention.prop_radius",
       [](TrainConfig& c, const std::string& v) {
         c.attn.prop_radius = parse_int("attention.prop_radius", v);
       },
       [](const TrainConfig& c) { return std::to_string(c.attn.prop_radius); }},
      {"attention.extract_stride",
       [](TrainConfig& c, const std::string& v) {
         c.attn.extract_stride = parse_int("attention.extract_stride", v);
       },
       [](const TrainConfig& c) {
         return std::to_string(c.attn.extract_stride);
       }},
      {"attention.downscale_rate",
       [](TrainConfig& c, const std::string& v) {
         c.attn.downscale_rate = parse_int("attention.downscale_rate", v);
       },
       [](const TrainConfig& c) {
         return std::to_string(c.attn.downscale_rate);
       }},
  };
  return table;
}

void set_key(TrainConfig& cfg, const std::string& key,
             const std::string& value) {
  for (const Entry& e : entries())
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  throw Error("config: unknown key '" + key + "'");
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line = line.substr(0, cut);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check(line.back() == ']',
            "config: malformed section header on line " +
                std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      check(section == "train" || section == "arch" || section == "attention",
            "config: unknown section '" + section + "'");
      continue;
    }
    size_t eq = line.find('=');
    check(eq != std::string::npos,
          "config: expected 'key = value' on line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    check(!key.empty() && !value.empty(),
          "config: empty key or value on line " + std::to_string(lineno));
    check(!section.empty(),
          "config: '" + key + "' appears before any [section]");
    set_key(cfg, section + "." + key, value);
  }
  return cfg;
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  check(eq != std::string::npos && eq > 0 && eq + 1 < assignment.size(),
        "config: override must look like section.key=value, got '" +
            assignment + "'");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  check(key.find('.') != std::string::npos,
        "config: override key must be section.key, got '" + key + "'");
  set_key(cfg, key, value);
}

std::string echo_config(const TrainConfig& cfg) {
  std::string out;
  std::string current;
  for (const Entry& e : entries()) {
    std::string key = e.key;
    size_t dot = key.find('.');
    std::string section = key.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + section + "]\n";
      current = section;
    }
    out += key.substr(dot + 1) + " = " + e.get(cfg) + "\n";
  }
  return out;
}

}  // namespace cain
