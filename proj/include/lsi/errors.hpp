#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lsi {

enum class ErrorKind {
  patch_empty_interior,
  cover_gap,
  channel_overflow,
  parse_error,
  empty_system,
  not_spd,
  no_convergence,
  dependent_constraints,
  singular_coarse,
  cap_exceeded,
  breakdown,
  config_error,
  invalid_argument,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::patch_empty_interior: return "PatchEmptyInterior";
    case ErrorKind::cover_gap: return "CoverGap";
    case ErrorKind::channel_overflow: return "ChannelOverflow";
    case ErrorKind::parse_error: return "ParseError";
    case ErrorKind::empty_system: return "EmptySystem";
    case ErrorKind::not_spd: return "NotSPD";
    case ErrorKind::no_convergence: return "NoConvergence";
    case ErrorKind::dependent_constraints: return "DependentConstraints";
    case ErrorKind::singular_coarse: return "SingularCoarse";
    case ErrorKind::cap_exceeded: return "CapExceeded";
    case ErrorKind::breakdown: return "Breakdown";
    case ErrorKind::config_error: return "ConfigError";
    case ErrorKind::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(int line, int column, const std::string& what)
      : Error(ErrorKind::parse_error,
              "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
        line_(line),
        column_(column) {}

  [[nodiscard]] int line() const noexcept { return line_; }
  [[nodiscard]] int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// Raised when a linear solve stalls; the last residual is kept for reporting.
class NoConvergence : public Error {
 public:
  NoConvergence(int iterations, double residual)
      : Error(ErrorKind::no_convergence, "cg stopped after " + std::to_string(iterations) +
                                             " iterations, relative residual " +
                                             std::to_string(residual)),
        iterations_(iterations),
        residual_(residual) {}

  [[nodiscard]] int iterations() const noexcept { return iterations_; }
  [[nodiscard]] double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace lsi
