#pragma once

#include <stdexcept>
#include <string>

namespace cmdplab {

enum class ErrorCode {
  MalformedProblem,
  NumericalBreakdown,
  ShapeMismatch,
  NotErgodic,
  SingularSystem,
  MixingCap,
  Infeasible,
  ConfigInvalid,
  HorizonDegenerate,
  ScheduleTooShort,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

// All library failures are reported through this exception; the code is what
// the C API forwards to callers.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MalformedProblem: return "MalformedProblem";
    case ErrorCode::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotErgodic: return "NotErgodic";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::MixingCap: return "MixingCap";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::HorizonDegenerate: return "HorizonDegenerate";
    case ErrorCode::ScheduleTooShort: return "ScheduleTooShort";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace cmdplab
