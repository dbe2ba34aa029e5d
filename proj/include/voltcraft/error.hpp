#pragma once

#include <stdexcept>
#include <string>

namespace voltcraft {

/// Error categories shared by every module. The numeric values are mirrored
/// one-to-one by the `vc_status` codes of the C API.
enum class ErrorCode : int {
  Parse = 1,
  Topology,
  Unit,
  Capability,
  UnknownBus,
  Diverged,
  Numerical,
  ActionOutOfBounds,
  Infeasible,
  MaxIterations,
  TooManyInverters,
  NoFeasiblePoint,
  DimensionMismatch,
  NonFiniteActivation,
  NonFiniteGradient,
  DegenerateSupport,
  OutOfSupport,
  VersionMismatch,
  MissingColumn,
  NonMonotoneTime,
  Io,
  InvalidArgument,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace voltcraft
