#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "anuw/trainer.hpp"

namespace anuw {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// `key = value` lines; `#` starts a comment; blank lines are ignored.
/// Throws ConfigError on a line without '=' or with an empty key.
std::vector<ConfigEntry> parse_config_text(std::string_view text);

/// Applies entries to `cfg`. Unknown keys and unparsable values throw
/// ConfigError naming the line.
void apply_config(TrainConfig& cfg, const std::vector<ConfigEntry>& entries);

/// Reads and applies a config file on top of `base`.
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every key accepted by apply_config.
std::vector<std::string> config_keys();

}  // namespace anuw
