#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace rdn {

// Layered key=value configuration: command-line flags override RDN_*
// environment variables, which override the config file. Every key is
// validated against a fixed schema; unknown keys are errors.
class RunConfig {
 public:
  // Loads `path` (key = value lines, '#' comments) when non-empty, then
  // applies RDN_<KEY> environment overrides.
  static RunConfig load(const std::string& path);

  // Highest-precedence layer, fed from parsed CLI flags.
  void set_flag(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;

  static bool known_key(const std::string& key);

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace rdn
