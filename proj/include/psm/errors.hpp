#pragma once

#include <stdexcept>
#include <string>

namespace psm {

// Error taxonomy shared by the library and the CLI. Each error carries a
// stable machine-readable code so the CLI can emit structured error JSON.
enum class ErrorCode {
  InvalidArgument,
  SeriesTooShort,
  NotCalibrated,
  SingularMass,
  StateDiverged,
  IndexOutOfGrid,
  EmptyRecordings,
  WindowNotFull,
  ConfigError,
  IoError,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::NotCalibrated: return "NotCalibrated";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::StateDiverged: return "StateDiverged";
    case ErrorCode::IndexOutOfGrid: return "IndexOutOfGrid";
    case ErrorCode::EmptyRecordings: return "EmptyRecordings";
    case ErrorCode::WindowNotFull: return "WindowNotFull";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace psm
