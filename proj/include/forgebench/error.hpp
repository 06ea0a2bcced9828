#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forgebench {

enum class ErrorCode {
  // dataset_ingest
  MissingSplitFile,
  EmptyManifest,
  DuplicateId,
  MalformedLine,
  UnknownLabelToken,
  UnlabeledRecord,
  ImageTooSmall,
  ForgedWithoutRegion,
  NoPristineWindowAvailable,
  // jpeg_forensics
  NotAJpeg,
  ProgressiveUnsupported,
  CorruptStream,
  PlaneTooSmall,
  AlreadyApplied,
  UndecodableImage,
  CorruptFeatureCache,
  // classifiers
  DegenerateTrainingSet,
  SingleClassTrainingSet,
  NonPositiveC,
  DimensionMismatch,
  InsufficientClassMembers,
  ShapeMismatch,
  NonFiniteLoss,
  LeakageDetected,
  EmptyPatchSet,
  CorruptCheckpoint,
  // llm_adapter
  MissingPlaceholder,
  UnknownMediaType,
  AuthError,
  ExhaustedRetries,
  NonRetryableStatus,
  TransportError,
  // metrics
  SingleClassInput,
  InvalidScore,
  InvalidBinWidth,
  // report
  CorruptRunFile,
  MetricMismatch,
  // cli
  MissingUpstreamArtifact,
  ConfigError,
  IoError,
};

/// Coarse error category; drives CLI exit codes.
enum class ErrorCategory { Usage, Data, Transport };

std::string_view error_code_name(ErrorCode code);
ErrorCategory error_category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace forgebench
