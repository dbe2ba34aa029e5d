#include "voltcraft/error.hpp"

namespace voltcraft {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Topology: return "TopologyError";
    case ErrorCode::Unit: return "UnitError";
    case ErrorCode::Capability: return "CapabilityError";
    case ErrorCode::UnknownBus: return "UnknownBus";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::Numerical: return "NumericalError";
    case ErrorCode::ActionOutOfBounds: return "ActionOutOfBounds";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::TooManyInverters: return "TooManyInverters";
    case ErrorCode::NoFeasiblePoint: return "NoFeasiblePoint";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::DegenerateSupport: return "DegenerateSupport";
    case ErrorCode::OutOfSupport: return "OutOfSupport";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

}  // namespace voltcraft
