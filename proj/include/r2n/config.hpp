#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace r2n {

enum class ConfigType { kString, kPath, kInt, kFloat, kBool, kList };

struct ConfigKey {
  const char* key;
  ConfigType type;
  const char* default_value;
  const char* doc;
};

// The documented schema. Every key has a default.
std::span<const ConfigKey> config_schema();
std::string config_type_name(ConfigType t);

// Flat `key = value` configuration. Lines are `key = value`; `#` starts a
// comment; unknown keys and ill-typed values are rejected.
class ExperimentConfig {
 public:
  ExperimentConfig();  // all defaults

  static ExperimentConfig parse(std::istream& in, const std::string& source = "<config>");
  static ExperimentConfig load(const std::string& path);

  // Validates against the schema.
  void set(const std::string& key, const std::string& value);
  // R2N_<KEY> with dots as underscores, e.g. R2N_KGE_DIM for kge.dim.
  void apply_env(char** envp);
  static std::string env_name(const std::string& key);

  const std::string& raw(const std::string& key) const;
  std::string str(const std::string& key) const { return raw(key); }
  std::int64_t integer(const std::string& key) const;
  std::uint64_t uinteger(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  // Every key, sorted, one `key = value` line each.
  void write(std::ostream& out) const;
  std::string serialize() const;
  // Serialized subset of keys starting with any of the prefixes.
  std::string subset(std::span<const std::string> prefixes) const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

 private:
  std::map<std::string, std::string> values_;
};

// Sub-seed for a named stage: first 8 bytes of SHA-256("<seed>:<name>").
std::uint64_t derive_seed(std::uint64_t seed, const std::string& stage);

}  // namespace r2n
