#pragma once

#include <stdexcept>
#include <string>

namespace mapflow {

enum class ErrorCode {
  InvalidExponent,
  MassDeficitNegative,
  DivergentExposure,
  StepCapExceeded,
  DivisionAtAbsorption,
  StartOffGrid,
  EvaluationNearPole,
  TimeBeyondHorizon,
  BudgetExceeded,
  TruncatedAncestor,
  EmptySample,
  IoError,
  ConfigError,
  InvalidArgument,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mapflow
