#include "pathflow/error.hpp"

namespace pathflow {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kNonGridTime: return "NonGridTime";
    case ErrorKind::kGridMismatch: return "GridMismatch";
    case ErrorKind::kProfileInconsistent: return "ProfileInconsistent";
    case ErrorKind::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::kCoefficientEvaluation: return "CoefficientEvaluation";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kSingularDesign: return "SingularDesign";
    case ErrorKind::kRegressionFailure: return "RegressionFailure";
    case ErrorKind::kDriverEvaluation: return "DriverEvaluation";
    case ErrorKind::kUnboundedCoefficient: return "UnboundedCoefficient";
    case ErrorKind::kStencilOverflow: return "StencilOverflow";
    case ErrorKind::kEpsOutOfRange: return "EpsOutOfRange";
    case ErrorKind::kBandwidthTooWide: return "BandwidthTooWide";
    case ErrorKind::kNonCoercive: return "NonCoercive";
    case ErrorKind::kResolveWithLargerM: return "ResolveWithLargerM";
    case ErrorKind::kUnboundedControl: return "UnboundedControl";
    case ErrorKind::kDegenerateNoise: return "DegenerateNoise";
    case ErrorKind::kConfigInvalid: return "ConfigInvalid";
    case ErrorKind::kBenchmarkUnknown: return "BenchmarkUnknown";
    case ErrorKind::kFormat: return "Format";
  }
  return "Unknown";
}

}  // namespace pathflow
