#pragma once

#include <stdexcept>
#include <string>

namespace hdas {

enum class ErrorKind {
  kShape,
  kInvalidArgument,
  kValidation,
  kNumeric,
  kIo,
};

/// Exception type thrown by every module of the engine. The kind maps onto
/// the status codes of the C API.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace hdas
