#include "nonpsa/error.hpp"

namespace nonpsa {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TrailingData: return "TrailingData";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::UnknownEnumValue: return "UnknownEnumValue";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::MissingFeature: return "MissingFeature";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::LayerChannelMismatch: return "LayerChannelMismatch";
    case ErrorCode::TooFewFrames: return "TooFewFrames";
    case ErrorCode::SingleCluster: return "SingleCluster";
    case ErrorCode::NoValidCandidate: return "NoValidCandidate";
    case ErrorCode::EmptyDatastore: return "EmptyDatastore";
    case ErrorCode::NoLabelsRetrieved: return "NoLabelsRetrieved";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace nonpsa
