#pragma once

#include <stdexcept>
#include <string>

namespace regentree {

enum class ErrorKind {
  invalid_argument,
  cap_exceeded,
  conditioning_too_rare,
  step_underflow,
  immortal_mechanism,
  undecided,
  instance_too_large,
  parse_error,
  io_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::cap_exceeded: return "cap exceeded";
    case ErrorKind::conditioning_too_rare: return "conditioning too rare";
    case ErrorKind::step_underflow: return "step underflow";
    case ErrorKind::immortal_mechanism: return "immortal mechanism";
    case ErrorKind::undecided: return "undecided";
    case ErrorKind::instance_too_large: return "instance too large";
    case ErrorKind::parse_error: return "parse error";
    case ErrorKind::io_error: return "i/o error";
  }
  return "error";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorKind::invalid_argument, what);
}

}  // namespace regentree
