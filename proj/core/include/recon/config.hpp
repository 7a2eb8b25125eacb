#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "recon/errors.hpp"

namespace recon {

// Flat UTF-8 "key = value" settings with '#' comments and repeated
// [observation] blocks. Every key a command resolves (including defaults) is
// echoed into the run manifest; keys nobody resolves are an error.
class KeyValueBlock {
 public:
  KeyValueBlock() = default;
  explicit KeyValueBlock(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string require_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  long long require_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  double require_real(const std::string& key) const;
  double get_real(const std::string& key, double fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_real_list(const std::string& key,
                                    const std::vector<double>& fallback) const;
  std::vector<std::string> get_str_list(const std::string& key,
                                        const std::vector<std::string>& fallback) const;

  // Keys present but never resolved by any getter.
  std::vector<std::string> unused_keys() const;
  // Resolved (key, value) pairs including defaults, for the run manifest.
  const std::map<std::string, std::string>& echo() const { return echo_; }

 private:
  std::string lookup(const std::string& key, const std::string* fallback) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  mutable std::map<std::string, std::string> echo_;
};

struct RunConfig {
  KeyValueBlock globals;
  std::vector<KeyValueBlock> observations;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text, const std::string& origin);

  // --set key=value override (globals only).
  void apply_override(const std::string& key_eq_value);

  // Throws ConfigError naming any key no getter resolved.
  void fail_on_unused() const;

  // Manifest body: command name, resolved globals, observation blocks.
  std::string render_manifest(const std::string& command) const;
};

}  // namespace recon
