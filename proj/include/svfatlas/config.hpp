#pragma once

// Flat "key = value" configuration files ('#' starts a comment). Every
// command accepts a fixed key set; unknown keys, duplicates and malformed
// values raise ConfigError.

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "svfatlas/inverse.hpp"
#include "svfatlas/optim.hpp"
#include "svfatlas/synth.hpp"

namespace svfatlas {

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string &text);
ConfigMap load_config(const std::filesystem::path &path);

// Keys accepted by the optimisation commands (build-atlas, register).
const std::set<std::string> &optim_keys();
const std::set<std::string> &synth_keys();
const std::set<std::string> &invert_keys();

void reject_unknown_keys(const ConfigMap &cfg, const std::set<std::string> &allowed);

struct RunConfig {
    OptimConfig optim;
    bool normalize = false;  // normalize_intensity on every loaded image
};

RunConfig to_run_config(const ConfigMap &cfg);
// Same keys; the atlas mode is ignored.
RunConfig to_register_config(const ConfigMap &cfg);
SynthConfig to_synth_config(const ConfigMap &cfg);
InverseOptions to_inverse_options(const ConfigMap &cfg);

} // namespace svfatlas
