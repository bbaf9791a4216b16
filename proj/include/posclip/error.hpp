#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posclip {

enum class ErrorKind {
  BadMagic,
  UnsupportedVersion,
  SizeMismatch,
  MetaCountMismatch,
  NonFiniteValue,
  MalformedMeta,
  IndexOutOfRange,
  ZeroVector,
  InsufficientSentences,
  TooFewOccurrences,
  LayerMismatch,
  SpecOutOfRange,
  PositionOverflow,
  EmptySplit,
  DimMismatch,
  EmptyEvalSet,
  EmptySentence,
  ConstantInput,
  LengthMismatch,
  MissingTarget,
  MalformedInput,
  Io,
};

std::string_view to_string(ErrorKind kind);

// All data errors raised by the library carry a kind so callers (and tests)
// can branch on the failure without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::MetaCountMismatch: return "MetaCountMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::MalformedMeta: return "MalformedMeta";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::InsufficientSentences: return "InsufficientSentences";
    case ErrorKind::TooFewOccurrences: return "TooFewOccurrences";
    case ErrorKind::LayerMismatch: return "LayerMismatch";
    case ErrorKind::SpecOutOfRange: return "SpecOutOfRange";
    case ErrorKind::PositionOverflow: return "PositionOverflow";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyEvalSet: return "EmptyEvalSet";
    case ErrorKind::EmptySentence: return "EmptySentence";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::MissingTarget: return "MissingTarget";
    case ErrorKind::MalformedInput: return "MalformedInput";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace posclip
