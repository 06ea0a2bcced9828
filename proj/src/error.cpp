#include "forgebench/error.hpp"

namespace forgebench {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingSplitFile: return "MissingSplitFile";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::UnknownLabelToken: return "UnknownLabelToken";
    case ErrorCode::UnlabeledRecord: return "UnlabeledRecord";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ForgedWithoutRegion: return "ForgedWithoutRegion";
    case ErrorCode::NoPristineWindowAvailable: return "NoPristineWindowAvailable";
    case ErrorCode::NotAJpeg: return "NotAJpeg";
    case ErrorCode::ProgressiveUnsupported: return "ProgressiveUnsupported";
    case ErrorCode::CorruptStream: return "CorruptStream";
    case ErrorCode::PlaneTooSmall: return "PlaneTooSmall";
    case ErrorCode::AlreadyApplied: return "AlreadyApplied";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::CorruptFeatureCache: return "CorruptFeatureCache";
    case ErrorCode::DegenerateTrainingSet: return "DegenerateTrainingSet";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::NonPositiveC: return "NonPositiveC";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientClassMembers: return "InsufficientClassMembers";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::LeakageDetected: return "LeakageDetected";
    case ErrorCode::EmptyPatchSet: return "EmptyPatchSet";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::MissingPlaceholder: return "MissingPlaceholder";
    case ErrorCode::UnknownMediaType: return "UnknownMediaType";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::ExhaustedRetries: return "ExhaustedRetries";
    case ErrorCode::NonRetryableStatus: return "NonRetryableStatus";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::InvalidBinWidth: return "InvalidBinWidth";
    case ErrorCode::CorruptRunFile: return "CorruptRunFile";
    case ErrorCode::MetricMismatch: return "MetricMismatch";
    case ErrorCode::MissingUpstreamArtifact: return "MissingUpstreamArtifact";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::MissingPlaceholder:
    case ErrorCode::NonPositiveC:
      return ErrorCategory::Usage;
    case ErrorCode::AuthError:
    case ErrorCode::ExhaustedRetries:
    case ErrorCode::NonRetryableStatus:
    case ErrorCode::TransportError:
      return ErrorCategory::Transport;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace forgebench
