#include "realsteer/error.hpp"

namespace realsteer {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::KOutOfRange: return "KOutOfRange";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ZeroExtent: return "ZeroExtent";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::TimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::ZeroClasses: return "ZeroClasses";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SpawnError: return "SpawnError";
    case ErrorCode::ConnectError: return "ConnectError";
    case ErrorCode::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorCode::ProtocolVersionMismatch: return "ProtocolVersionMismatch";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::RemoteError: return "RemoteError";
    case ErrorCode::UnbalancedClasses: return "UnbalancedClasses";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
    case ErrorCode::InsufficientPool: return "InsufficientPool";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::ManifestMissing: return "ManifestMissing";
    case ErrorCode::ShapeByteMismatch: return "ShapeByteMismatch";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::NormViolation: return "NormViolation";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

}  // namespace realsteer
