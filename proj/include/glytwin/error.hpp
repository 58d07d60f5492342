#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glytwin {

enum class ErrorCode {
  InvalidArgument,
  Io,
  UnknownPatient,
  InsufficientHistory,
  SchemaMismatch,
  InsufficientCoverage,
  NoCarbEntry,
  DegenerateData,
  EmptyTrainingSet,
  InvalidK,
  NotModifiable,
  MaskedFeature,
  InvalidSample,
  PredictorFailure,
  NoTargetClassInstance,
  EmptySet,
  DegenerateRange,
  TooFewCfs,
  TooFewResults,
  NotConverged,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::UnknownPatient: return "UnknownPatient";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InsufficientCoverage: return "InsufficientCoverage";
    case ErrorCode::NoCarbEntry: return "NoCarbEntry";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::NotModifiable: return "NotModifiable";
    case ErrorCode::MaskedFeature: return "MaskedFeature";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::PredictorFailure: return "PredictorFailure";
    case ErrorCode::NoTargetClassInstance: return "NoTargetClassInstance";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::TooFewCfs: return "TooFewCfs";
    case ErrorCode::TooFewResults: return "TooFewResults";
    case ErrorCode::NotConverged: return "NotConverged";
  }
  return "Unknown";
}

// Every failure raised by the library carries a stable code so the CLI and
// the HTTP service can emit machine-readable error records.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace glytwin
