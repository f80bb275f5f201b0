#pragma once

#include <stdexcept>
#include <string>

namespace cade {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidInput,
  Config,
  MissingFile,
  Registration,
  ReferenceDetection,
  Segmentation,
  Architecture,
  Generation,
  Divergence,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Configuration problem tied to a dotted key path such as `train.lr`.
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& message)
      : Error(ErrorKind::Config, key_path + ": " + message), key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

/// Registration backend failure for a given time index.
class RegistrationError : public Error {
 public:
  RegistrationError(int time_index, const std::string& message)
      : Error(ErrorKind::Registration, "t=" + std::to_string(time_index) + ": " + message),
        time_index_(time_index) {}

  int time_index() const noexcept { return time_index_; }

 private:
  int time_index_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorKind::InvalidInput, message);
}

}  // namespace cade
