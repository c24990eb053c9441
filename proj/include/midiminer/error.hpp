// Error type shared by every midiminer module.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace midiminer {

enum class ErrorCode {
  MalformedVlq,
  BadHeader,
  BadChunk,
  UnsupportedDivision,
  UnsupportedFormat,
  EmptyCloud,
  NoNotes,
  EmptyTrack,
  DegenerateData,
  DimensionMismatch,
  BadModelFile,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedVlq: return "MalformedVlq";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::BadChunk: return "BadChunk";
    case ErrorCode::UnsupportedDivision: return "UnsupportedDivision";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::NoNotes: return "NoNotes";
    case ErrorCode::EmptyTrack: return "EmptyTrack";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadModelFile: return "BadModelFile";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace midiminer
