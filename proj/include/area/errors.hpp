#pragma once

#include <stdexcept>
#include <string>

namespace area {

// Bad user input: malformed config, schema violations, shape mismatches
// coming from files. `where` is a dotted field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

}  // namespace area
