#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace must {

struct ConfigKeyInfo {
  const char* name;
  const char* def;
  const char* help;
};

/// Every key a run-config file or --set override may use, with defaults.
std::span<const ConfigKeyInfo> config_keys();

/// Flat key=value configuration. Precedence is defaults < file < set(); a
/// file may not repeat a key and unknown keys are rejected everywhere.
class RunConfig {
 public:
  RunConfig();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  bool has(const std::string& key) const;  // set and non-empty

  int64_t get_int(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::vector<double> get_real_list(const std::string& key) const;
  std::vector<uint64_t> get_u64_list(const std::string& key) const;
  std::vector<int64_t> get_int_list(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace must
