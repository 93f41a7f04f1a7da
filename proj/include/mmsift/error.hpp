#pragma once

#include <stdexcept>
#include <string>

namespace mmsift {

enum class ErrorKind {
  Io,           // missing file, unwritable path, short read
  Format,       // corrupt header, schema violation
  Unsupported,  // valid file we refuse (bit depth, channel count, config)
  Validation,   // invariant or precondition violation
  Degenerate,   // input carries no usable signal (e.g. constant image)
};

const char* to_string(ErrorKind kind) noexcept;

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

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorKind::Validation, what);
}

}  // namespace mmsift
