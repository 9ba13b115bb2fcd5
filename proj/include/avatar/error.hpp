#pragma once

#include <stdexcept>
#include <string>

namespace avatar {

/// Failure category. Maps 1:1 onto the CLI exit codes.
enum class ErrorKind {
  kConfig = 2,
  kAsset = 3,
  kAdapter = 4,
  kNumeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

struct AssetError : Error {
  explicit AssetError(const std::string& what) : Error(ErrorKind::kAsset, what) {}
};

struct AdapterError : Error {
  explicit AdapterError(const std::string& what) : Error(ErrorKind::kAdapter, what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::kNumeric, what) {}
};

}  // namespace avatar
