#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nonpsa {

enum class ErrorCode {
  // ingest
  BadMagic,
  UnsupportedVersion,
  TruncatedFile,
  TrailingData,
  NonFiniteValue,
  IoFailure,
  DuplicateId,
  MissingField,
  UnknownEnumValue,
  MalformedRecord,
  MissingFeature,
  // datastore
  DimensionMismatch,
  LayerChannelMismatch,
  // segmentation
  TooFewFrames,
  SingleCluster,
  NoValidCandidate,
  // inference
  EmptyDatastore,
  NoLabelsRetrieved,
  // evaluation
  SingleClass,
  EmptyClass,
  // anything violating a documented precondition
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure surfaced by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nonpsa
