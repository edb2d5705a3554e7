#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tunnelexit {

// Failure categories raised by the compute modules. The CLI maps every
// ComputeError to exit code 3 and reports the kind by name.
enum class ErrorKind {
  NonConvergence,
  SolverSingular,
  Aborted,
  WindowTooLarge,
  ImagResidue,
  EmptyRegion,
  NoBarrier,
  MaskedOut,
  StepUnstable,
  NoRoot,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::SolverSingular: return "SolverSingular";
    case ErrorKind::Aborted: return "Aborted";
    case ErrorKind::WindowTooLarge: return "WindowTooLarge";
    case ErrorKind::ImagResidue: return "ImagResidue";
    case ErrorKind::EmptyRegion: return "EmptyRegion";
    case ErrorKind::NoBarrier: return "NoBarrier";
    case ErrorKind::MaskedOut: return "MaskedOut";
    case ErrorKind::StepUnstable: return "StepUnstable";
    case ErrorKind::NoRoot: return "NoRoot";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class ComputeError : public std::runtime_error {
 public:
  ComputeError(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tunnelexit
