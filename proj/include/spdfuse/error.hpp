#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spdfuse {

enum class ErrorCode {
  NonFiniteInput,
  NotSymmetric,
  NonPositiveEigenvalue,
  RetractionFailure,
  TooFewColumns,
  ColumnMismatch,
  DimMismatch,
  MissingCache,
  GeometryMismatch,
  SizeMismatch,
  TooSmall,
  NonFiniteLoss,
  DegenerateSet,
  ZeroIntra,
  KTooLarge,
  DecodeError,
  UnsupportedFormat,
  IoError,
  ZeroDim,
  BadLevel,
  VersionMismatch,
  CorruptFile,
  ConfigError,
  DatasetError,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NonPositiveEigenvalue: return "NonPositiveEigenvalue";
    case ErrorCode::RetractionFailure: return "RetractionFailure";
    case ErrorCode::TooFewColumns: return "TooFewColumns";
    case ErrorCode::ColumnMismatch: return "ColumnMismatch";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingCache: return "MissingCache";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::DegenerateSet: return "DegenerateSet";
    case ErrorCode::ZeroIntra: return "ZeroIntra";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::DecodeError: return "DecodeError";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ZeroDim: return "ZeroDim";
    case ErrorCode::BadLevel: return "BadLevel";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DatasetError: return "DatasetError";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. Callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spdfuse
