#include "parinv/config.hpp"

#include "parinv/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace parinv {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  char prev = 0;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.';
    if (!ok || (c == '.' && prev == '.')) return false;
    prev = c;
  }
  return true;
}

[[noreturn]] void bad_value(const ConfigEntry& e, std::string_view what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " expects " +
                    std::string(what) + ", got '" + e.value + "'");
}

template <typename T>
T parse_number(const ConfigEntry& e, std::string_view text, std::string_view what) {
  T out{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  if (ec != std::errc() || ptr != end) bad_value(e, what);
  return out;
}

}  // namespace

std::vector<ConfigEntry> parse_config_text(std::string_view text) {
  std::vector<ConfigEntry> out;
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (!valid_key(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": invalid key '" + std::string(key) + "'");
    }
    if (value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty value for " + std::string(key));
    }
    if (!seen.emplace(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + std::string(key));
    }
    out.push_back({std::string(key), std::string(value), line_no});
  }
  return out;
}

std::vector<ConfigEntry> parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace config_value {

bool to_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no" || e.value == "off") return false;
  bad_value(e, "a boolean");
}

double to_double(const ConfigEntry& e) {
  const double v = parse_number<double>(e, e.value, "a number");
  if (!std::isfinite(v)) bad_value(e, "a finite number");
  return v;
}

std::int64_t to_int(const ConfigEntry& e) { return parse_number<std::int64_t>(e, e.value, "an integer"); }

std::uint64_t to_uint(const ConfigEntry& e) {
  return parse_number<std::uint64_t>(e, e.value, "a non-negative integer");
}

std::vector<double> to_double_list(const ConfigEntry& e) {
  std::vector<double> out;
  std::string_view rest = e.value;
  while (true) {
    const auto comma = rest.find(',');
    const std::string_view item = trim(rest.substr(0, comma));
    const double v = parse_number<double>(e, item, "a comma-separated list of numbers");
    if (!std::isfinite(v)) bad_value(e, "finite numbers");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

}  // namespace config_value

void ConfigBinder::bind(std::string key, Setter setter) { setters_[std::move(key)] = std::move(setter); }

void ConfigBinder::apply(const std::vector<ConfigEntry>& entries) const {
  for (const ConfigEntry& e : entries) {
    const auto it = setters_.find(e.key);
    if (it == setters_.end()) {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key " + e.key);
    }
    it->second(e);
  }
}

}  // namespace parinv
