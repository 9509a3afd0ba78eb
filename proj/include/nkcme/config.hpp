#pragma once

// Flat key = value experiment configs. Each command owns a schema of known
// keys with defaults; anything else is rejected.

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace nkcme::config {

using KeyValues = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment. `origin` names the source in errors.
KeyValues parse_text(const std::string& text, const std::string& origin);
KeyValues load_file(const std::string& path);

/// Parses "key=value" override strings.
KeyValues parse_overrides(const std::vector<std::string>& items);

class Config {
 public:
  explicit Config(KeyValues schema_defaults);

  /// Later calls win. Throws ConfigError on an unknown key.
  void apply(const KeyValues& kv, const std::string& origin);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<std::uint64_t> get_u64_list(const std::string& key) const;

  const KeyValues& values() const { return values_; }

  /// Sorted "key=value\n" lines, optionally leaving some keys out.
  std::string canonical(const std::vector<std::string>& exclude = {}) const;
  std::string hash(const std::vector<std::string>& exclude = {}) const;
  nlohmann::ordered_json to_json() const;

 private:
  KeyValues values_;
};

KeyValues gen_data_schema();
KeyValues train_density_schema();
KeyValues eval_density_schema();
KeyValues train_rl_schema();

}  // namespace nkcme::config
