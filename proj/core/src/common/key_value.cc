#include "mlasr/common/key_value.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mlasr/common/error.h"

namespace mlasr {
namespace {

std::string_view Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::Parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = Trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    const std::string_view key = Trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", line_no));
    kv.entries_[std::string(key)] = std::string(Trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return Parse(buf.str());
}

std::optional<std::string> KeyValues::Get(const std::string& key) const {
  if (auto it = entries_.find(key); it != entries_.end()) return it->second;
  return std::nullopt;
}

std::string KeyValues::GetString(const std::string& key, const std::string& fallback) const {
  return Get(key).value_or(fallback);
}

long long KeyValues::GetInt(const std::string& key, long long fallback) const {
  const auto v = Get(key);
  if (!v) return fallback;
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw ConfigError(fmt::format("config key '{}': '{}' is not an integer", key, *v));
  }
  return out;
}

double KeyValues::GetDouble(const std::string& key, double fallback) const {
  const auto v = Get(key);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const double out = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("config key '{}': '{}' is not a number", key, *v));
  }
}

bool KeyValues::GetBool(const std::string& key, bool fallback) const {
  const auto v = Get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw ConfigError(fmt::format("config key '{}': '{}' is not a boolean", key, *v));
}

std::vector<std::string> KeyValues::UnknownKeys(const std::vector<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
  }
  return out;
}

std::string KeyValues::Serialize() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += fmt::format("{} = {}\n", k, v);
  return out;
}

}  // namespace mlasr
