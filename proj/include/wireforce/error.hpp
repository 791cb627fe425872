#ifndef WIREFORCE_ERROR_HPP
#define WIREFORCE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace wireforce {

enum class ErrorKind {
  InvalidArgument,
  DegenerateEdge,
  AntiParallelEdges,
  DoubleAugmentation,
  NotConverged,
  RodTooShort,
  NoUndisturbedSection,
  UnboundedSection,
  ZeroForceSection,
  InconsistentSection,
  InsufficientPoints,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateEdge: return "DegenerateEdge";
    case ErrorKind::AntiParallelEdges: return "AntiParallelEdges";
    case ErrorKind::DoubleAugmentation: return "DoubleAugmentation";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::RodTooShort: return "RodTooShort";
    case ErrorKind::NoUndisturbedSection: return "NoUndisturbedSection";
    case ErrorKind::UnboundedSection: return "UnboundedSection";
    case ErrorKind::ZeroForceSection: return "ZeroForceSection";
    case ErrorKind::InconsistentSection: return "InconsistentSection";
    case ErrorKind::InsufficientPoints: return "InsufficientPoints";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace wireforce

#endif  // WIREFORCE_ERROR_HPP
