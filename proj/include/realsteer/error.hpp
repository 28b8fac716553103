#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace realsteer {

enum class ErrorCode {
  EmptyInput,
  ShapeMismatch,
  NotSymmetric,
  KOutOfRange,
  NoConvergence,
  ZeroExtent,
  NonFiniteInput,
  TooFewSamples,
  DegenerateLabels,
  TimestepOutOfRange,
  ZeroClasses,
  InvalidArgument,
  SpawnError,
  ConnectError,
  HandshakeTimeout,
  ProtocolVersionMismatch,
  TransportError,
  MalformedResponse,
  IdMismatch,
  RemoteError,
  UnbalancedClasses,
  TargetUnreachable,
  InsufficientPool,
  BadConfig,
  EmptySet,
  ManifestMissing,
  ShapeByteMismatch,
  UnsupportedVersion,
  NormViolation,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. `code()` identifies the failure class; `what()`
/// carries the code name followed by a human readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& detail) {
  throw Error(code, detail);
}

inline void require(bool condition, ErrorCode code, const std::string& detail) {
  if (!condition) fail(code, detail);
}

}  // namespace realsteer
