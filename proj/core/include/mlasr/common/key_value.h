#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mlasr {

// Flat `key = value` text configuration. Blank lines and lines starting with
// '#' are ignored; later keys override earlier ones.
class KeyValues {
 public:
  static KeyValues Parse(std::string_view text);
  static KeyValues Load(const std::string& path);

  void Set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  bool Has(const std::string& key) const { return entries_.contains(key); }
  std::optional<std::string> Get(const std::string& key) const;

  std::string GetString(const std::string& key, const std::string& fallback) const;
  long long GetInt(const std::string& key, long long fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  // Keys not in `known`; used to reject typos.
  std::vector<std::string> UnknownKeys(const std::vector<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Sorted `key = value` lines.
  std::string Serialize() const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace mlasr
