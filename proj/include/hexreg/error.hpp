#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hexreg {

enum class ErrorCode {
  // linalg
  ZeroRow,
  NotNormalized,
  NoConvergence,
  ShapeMismatch,
  // autodiff
  NonFinite,
  BadGraph,
  // hierarchy
  MissingLabels,
  // schedule
  EmptyBatch,
  BadSchedule,
  // losses
  BadTemperature,
  DegenerateBatch,
  TauOne,
  EmptyH,
  NonPositiveDenominator,
  EmptyQueue,
  ZeroVariance,
  BadAlpha,
  // diagnostics
  ZeroMatrix,
  InsufficientSamples,
  DegenerateDistribution,
  EmptyTrainSet,
  BadK,
  // data / io
  BadParams,
  IoError,
  SchemaError,
  VersionMismatch,
  // trainer / cli
  BadDims,
  BadConfig,
  Usage,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Process exit code for an error category: 1 usage, 2 data/schema, 3 numerical.
int exit_code(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace hexreg
