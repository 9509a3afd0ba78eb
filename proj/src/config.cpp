#include "nkcme/config.hpp"

#include "nkcme/error.hpp"
#include "nkcme/record.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace nkcme::config {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
    return v.substr(1, v.size() - 2);
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || p != end) throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  return v;
}

}  // namespace

KeyValues parse_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = unquote(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

KeyValues parse_overrides(const std::vector<std::string>& items) {
  KeyValues kv;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + item + "' is not key=value");
    kv[trim(item.substr(0, eq))] = unquote(trim(item.substr(eq + 1)));
  }
  return kv;
}

Config::Config(KeyValues schema_defaults) : values_(std::move(schema_defaults)) {}

void Config::apply(const KeyValues& kv, const std::string& origin) {
  for (const auto& [k, v] : kv) {
    if (!has(k)) {
      std::string known;
      for (const auto& [name, _] : values_) known += (known.empty() ? "" : ", ") + name;
      throw ConfigError(origin + ": unknown config key '" + k + "' (known: " + known + ")");
    }
    values_[k] = v;
  }
}

void Config::set(const std::string& key, const std::string& value) { apply({{key, value}}, "command line"); }

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }
long long Config::get_int(const std::string& key) const { return parse_number<long long>(key, get(key)); }
std::uint64_t Config::get_u64(const std::string& key) const { return parse_number<std::uint64_t>(key, get(key)); }

bool Config::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : split_list(get(key))) out.push_back(parse_number<int>(key, s));
  return out;
}

std::vector<std::uint64_t> Config::get_u64_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(get(key))) {
    const auto dash = s.find('-');
    if (dash != std::string::npos && dash > 0) {
      const auto lo = parse_number<std::uint64_t>(key, s.substr(0, dash));
      const auto hi = parse_number<std::uint64_t>(key, s.substr(dash + 1));
      if (hi < lo) throw ConfigError("config key '" + key + "': empty range " + s);
      for (auto v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_number<std::uint64_t>(key, s));
    }
  }
  return out;
}

std::string Config::canonical(const std::vector<std::string>& exclude) const {
  std::string out;
  for (const auto& [k, v] : values_)
    if (std::find(exclude.begin(), exclude.end(), k) == exclude.end()) out += k + "=" + v + "\n";
  return out;
}

std::string Config::hash(const std::vector<std::string>& exclude) const {
  return record::fnv1a_hex(canonical(exclude));
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

KeyValues gen_data_schema() {
  return {{"family", "bimodal"}, {"n", "5000"}, {"seed", "0"}, {"out", "data.csv"}};
}

KeyValues train_density_schema() {
  return {
      {"dataset", "bimodal"},  // toy family, or "csv"
      {"data_path", ""},
      {"target", "-1"},  // column name or index for csv data; -1 = last column
      {"n", "5000"},
      {"data_seed", "0"},
      {"test_fraction", "0"},
      {"split_seed", "0"},
      {"method", "proposal_joint"},
      {"seeds", "0"},
      {"out", "runs"},
      {"epochs", "1000"},
      {"batch_size", "50"},
      {"learning_rate", "1e-4"},
      {"weight_decay", "0.01"},
      {"hidden", "50,50"},
      {"grid_size", "100"},
      {"sigma_init", "1"},
      {"sigma_update_period", "1"},
      {"spectral_norm", "auto"},  // auto = on for csv data, off for toy families
      {"lambda", "0.1"},
      {"fixed_bandwidth", "0.1"},
  };
}

KeyValues eval_density_schema() {
  return {{"eval_seed", "0"}, {"eval_runs", "10"}, {"points", "200"}, {"samples", "50"},
          {"tabular_samples", "1000"}, {"bins", "10"}};
}

KeyValues train_rl_schema() {
  return {
      {"env", "cartpole"},
      {"loss", "fuse"},
      {"seeds", "0"},
      {"out", "runs"},
      {"total_steps", "100000"},
      {"gamma", "0.99"},
      {"batch_size", "32"},
      {"update_period", "2"},
      {"target_sync_period", "100"},
      {"epsilon_start", "1"},
      {"epsilon_end", "0.01"},
      {"epsilon_decay_steps", "10000"},
      {"eval_epsilon", "0.001"},
      {"eval_period", "100"},
      {"learning_rate", "0"},
      {"sigma", "10"},
      {"fuse_kernels", "10"},
      {"buffer_capacity", "10000"},
      {"atoms", "51"},
      {"v_min", "-100"},
      {"v_max", "100"},
      {"hidden", "50,50"},
  };
}

}  // namespace nkcme::config
