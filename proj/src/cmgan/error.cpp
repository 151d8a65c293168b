#include "cmgan/error.hpp"

namespace cmgan {

std::string_view error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::ConstantSeries: return "ConstantSeries";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::OovLabel: return "OovLabel";
    case ErrorKind::OovSentence: return "OovSentence";
    case ErrorKind::OovBenchmark: return "OovBenchmark";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::UnknownTruth: return "UnknownTruth";
    case ErrorKind::InconsistentCandidates: return "InconsistentCandidates";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateToken: return "DuplicateToken";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::Io: return "Io";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

ErrorCategory error_category(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroVector:
    case ErrorKind::DegenerateDistribution:
    case ErrorKind::ConstantSeries:
    case ErrorKind::NonFiniteGradient:
      return ErrorCategory::Numeric;
    case ErrorKind::InvalidArgument:
      return ErrorCategory::Usage;
    default:
      return ErrorCategory::Data;
  }
}

}  // namespace cmgan
