#pragma once

#include <stdexcept>
#include <string>

namespace compdial {

/// Invalid configuration or schema; CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable/unwritable file or corrupt payload; CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace compdial
