#pragma once

#include <map>
#include <string>

#include "serprank/train/experiment.hpp"

namespace serprank::train {

// Flattened "section.key" -> raw value pairs from an INI-style config file:
// `[section]` headers, `key = value` lines, full-line # or ; comments.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);

// Applies a parsed map onto the defaults.  Unknown keys, malformed values and
// inconsistent combinations all raise ConfigError before any work starts.
ExperimentConfig experiment_config_from_map(const ConfigMap& map);

ExperimentConfig load_experiment_config(const std::string& path);

// Every effective value in config-file syntax, defaults and resolved
// ambiguities included; what train echoes into the run directory.
std::string echo_config(const ExperimentConfig& config);

}  // namespace serprank::train
