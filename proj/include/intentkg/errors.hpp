#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace intentkg {

// Endpoint kinds do not fit the relation schema.
class OntologyError : public std::runtime_error {
 public:
  explicit OntologyError(const std::string& msg) : std::runtime_error(msg) {}
};

// An accepted edge would close an isA cycle. Carries the would-be cycle.
class CycleError : public std::runtime_error {
 public:
  CycleError(const std::string& msg, std::vector<uint32_t> path)
      : std::runtime_error(msg), cycle_path(std::move(path)) {}
  std::vector<uint32_t> cycle_path;
};

class LookupError : public std::runtime_error {
 public:
  explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed persisted record; line is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, size_t line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line_number(line) {}
  size_t line_number;
};

class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace intentkg
