#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace proxsel {

enum class ErrorKind {
  InvalidArgument,
  RankDeficient,
  EmptySupport,
  InvalidBound,
  AssumptionViolation,
  SingularBlock,
  CombinatorialBlowup,
  NoConvergence,
  DegenerateTreatment,
  AggregateFailure,
  MissingColumn,
  ParseError,
  EmptyAfterFiltering,
  IoError,
  ConfigError,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::EmptySupport: return "EmptySupport";
    case ErrorKind::InvalidBound: return "InvalidBound";
    case ErrorKind::AssumptionViolation: return "AssumptionViolation";
    case ErrorKind::SingularBlock: return "SingularBlock";
    case ErrorKind::CombinatorialBlowup: return "CombinatorialBlowup";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorKind::AggregateFailure: return "AggregateFailure";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyAfterFiltering: return "EmptyAfterFiltering";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library. The kind is stable and meant for
/// programmatic dispatch; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace proxsel
