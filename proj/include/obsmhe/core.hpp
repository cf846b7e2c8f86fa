#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace obsmhe {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorKind {
  DomainViolation,
  GridMismatch,
  EigFailure,
  Unbounded,
  MaxItersExceeded,
  BoundaryStuck,
  SingularWindow,
  ConditionsFailed,
  InvalidArgument,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DomainViolation: return "DomainViolation";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::EigFailure: return "EigFailure";
    case ErrorKind::Unbounded: return "Unbounded";
    case ErrorKind::MaxItersExceeded: return "MaxItersExceeded";
    case ErrorKind::BoundaryStuck: return "BoundaryStuck";
    case ErrorKind::SingularWindow: return "SingularWindow";
    case ErrorKind::ConditionsFailed: return "ConditionsFailed";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Base of every error raised by the library. `kind()` is stable and is what
/// callers (and the CLI exit-code mapping) dispatch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Compact number formatting for error messages.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace obsmhe
