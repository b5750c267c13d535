#pragma once

#include <string>
#include <vector>

#include "cain/trainer.h"

namespace cain {

// INI-style run configuration: [train] / [arch] / [attention] sections,
// `key = value` lines, # or ; comments. Every key has a default, unknown
// keys are rejected, and `section.key=value` strings override after the
// file is read. echo_config prints the canonical form of the result.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::string& path);
void apply_override(TrainConfig& cfg, const std::string& assignment);
std::string echo_config(const TrainConfig& cfg);

}  // namespace cain
