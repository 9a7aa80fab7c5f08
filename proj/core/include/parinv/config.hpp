#pragma once

// Flat "key = value" configuration text with dotted keys. Blank lines and
// lines starting with '#' are ignored; a '#' after a value starts a comment.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace parinv {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Throws ConfigError on malformed lines or duplicate keys.
std::vector<ConfigEntry> parse_config_text(std::string_view text);
std::vector<ConfigEntry> parse_config_file(const std::filesystem::path& path);

namespace config_value {
// Each throws ConfigError naming the key on a malformed value.
bool to_bool(const ConfigEntry& e);
double to_double(const ConfigEntry& e);
std::int64_t to_int(const ConfigEntry& e);
std::uint64_t to_uint(const ConfigEntry& e);
std::vector<double> to_double_list(const ConfigEntry& e);
}  // namespace config_value

/// Dispatches entries to registered setters; unknown keys are errors.
class ConfigBinder {
 public:
  using Setter = std::function<void(const ConfigEntry&)>;

  void bind(std::string key, Setter setter);
  void apply(const std::vector<ConfigEntry>& entries) const;
  bool knows(const std::string& key) const { return setters_.count(key) != 0; }

 private:
  std::map<std::string, Setter> setters_;
};

}  // namespace parinv
