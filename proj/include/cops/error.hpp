#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cops {

enum class ErrorCode {
  EmptyDataset,
  MissingFile,
  UnknownDataset,
  InvalidFraction,
  EmptyClass,
  ZeroCount,
  WrongTask,
  EmptyCorpus,
  IdOutOfRange,
  ShapeMismatch,
  NonFinite,
  NonScalarLoss,
  InvalidArgument,
  InvalidConfig,
  VocabularyMismatch,
  Divergence,
  UntrainedModel,
  AugmentationExhausted,
  CorruptBundle,
  UnsupportedVersion,
  InvalidUrl,
  LengthMismatch,
  ForeignLabel,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::UnknownDataset: return "UnknownDataset";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::ZeroCount: return "ZeroCount";
    case ErrorCode::WrongTask: return "WrongTask";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::IdOutOfRange: return "IdOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::UntrainedModel: return "UntrainedModel";
    case ErrorCode::AugmentationExhausted: return "AugmentationExhausted";
    case ErrorCode::CorruptBundle: return "CorruptBundle";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvalidUrl: return "InvalidUrl";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ForeignLabel: return "ForeignLabel";
  }
  return "Unknown";
}

/// Every library failure surfaces as this exception; `code()` is stable and
/// is what the CLI prints in its structured error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace cops
