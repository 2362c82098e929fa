#pragma once

#include <stdexcept>
#include <string>

namespace verco {

// Invalid or inconsistent configuration (unknown map, bad hyperparameter, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A precondition of an operation was violated by the caller.
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Malformed file contents (layout, template, checkpoint, transcript).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace verco
