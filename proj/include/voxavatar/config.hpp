#pragma once

#include "voxavatar/optimize.hpp"

#include <string>
#include <utility>
#include <vector>

namespace vxa {

// Run config text format (docs/config_format.md):
//
//   # comment
//   plan.coarse_iters = 5000
//   plan.grid_double_steps = 500, 1500, 2000
//   plan.radius_stages = 1.4:2.1, 1.0:1.5, 0.8:1.2
//
// One `key = value` per line; later lines override earlier ones. Errors are
// ConfigError carrying the 1-based line number.

/// Applies one setting. `line` is only used for diagnostics.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value, int line = 0);

RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::string& path, RunConfig base = {});

/// Overrides of the form "key=value" (as given after "--" on the command line).
void apply_overrides(RunConfig& config, const std::vector<std::pair<std::string, std::string>>& overrides);

/// Full config in the text format; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const RunConfig& config);

}  // namespace vxa
