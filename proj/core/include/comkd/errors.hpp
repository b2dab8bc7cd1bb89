#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace comkd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not chain.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (non-positive temperature, empty batch, bad label).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A feature row too close to zero to normalize.
class DegenerateFeatureError : public Error {
 public:
  using Error::Error;
};

// An internal contract was broken by the caller (unnormalized logits input, missing grads).
class InvariantError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string key = {}, std::size_t line = 0)
      : Error(compose(what, key, line)), key_(std::move(key)), line_(line) {}

  const std::string& key() const noexcept { return key_; }
  // 1-based; 0 when the error did not come from a file.
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string compose(const std::string& what, const std::string& key, std::size_t line) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!key.empty()) out += "'" + key + "': ";
    return out + what;
  }

  std::string key_;
  std::size_t line_;
};

}  // namespace comkd
