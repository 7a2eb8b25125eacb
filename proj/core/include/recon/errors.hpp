#pragma once

#include <stdexcept>
#include <string>

namespace recon {

enum class ErrorKind {
  InvalidArgument,
  NegativeInput,
  DegenerateDistribution,
  FormatError,
  ShapeError,
  RangeError,
  NonPositiveSigma,
  MaskViolation,
  DivergedLoss,
  NonFiniteState,
  ScheduleError,
  EmptySpectrum,
  AllConstant,
  NonLinearOperator,
  IoError,
  ConfigError,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NegativeInput: return "NegativeInput";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::RangeError: return "RangeError";
    case ErrorKind::NonPositiveSigma: return "NonPositiveSigma";
    case ErrorKind::MaskViolation: return "MaskViolation";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::ScheduleError: return "ScheduleError";
    case ErrorKind::EmptySpectrum: return "EmptySpectrum";
    case ErrorKind::AllConstant: return "AllConstant";
    case ErrorKind::NonLinearOperator: return "NonLinearOperator";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool cond, ErrorKind kind, const std::string& message) {
  if (!cond) raise(kind, message);
}

}  // namespace recon
