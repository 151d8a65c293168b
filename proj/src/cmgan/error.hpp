#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cmgan {

enum class ErrorKind {
  // numeric failures
  ZeroVector,
  DegenerateDistribution,
  ConstantSeries,
  NonFiniteGradient,
  // data failures
  DimMismatch,
  OovLabel,
  OovSentence,
  OovBenchmark,
  EmptySplit,
  UnknownTruth,
  InconsistentCandidates,
  ParseError,
  DuplicateToken,
  VersionMismatch,
  Io,
  // caller errors
  InvalidArgument,
};

enum class ErrorCategory { Usage = 1, Data = 2, Numeric = 3 };

std::string_view error_kind_name(ErrorKind kind) noexcept;
ErrorCategory error_category(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return error_category(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace cmgan
