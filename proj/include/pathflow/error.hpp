#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pathflow {

enum class ErrorKind {
  kInvalidArgument,
  kNonGridTime,
  kGridMismatch,
  kProfileInconsistent,
  kIndexOutOfRange,
  kCoefficientEvaluation,
  kInsufficientSamples,
  kSingularDesign,
  kRegressionFailure,
  kDriverEvaluation,
  kUnboundedCoefficient,
  kStencilOverflow,
  kEpsOutOfRange,
  kBandwidthTooWide,
  kNonCoercive,
  kResolveWithLargerM,
  kUnboundedControl,
  kDegenerateNoise,
  kConfigInvalid,
  kBenchmarkUnknown,
  kFormat,
};

std::string_view error_kind_name(ErrorKind kind);

/// Single exception type for the library; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the regression BSDE solver; carries the failing time step.
class RegressionFailure : public Error {
 public:
  RegressionFailure(int step, const std::string& cause)
      : Error(ErrorKind::kRegressionFailure, "step " + std::to_string(step) + ": " + cause),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

/// The HJB solution has max|Z| above the truncation level M.
class ResolveWithLargerM : public Error {
 public:
  ResolveWithLargerM(double observed_max_z, double truncation)
      : Error(ErrorKind::kResolveWithLargerM,
              "max|Z| = " + std::to_string(observed_max_z) +
                  " >= M = " + std::to_string(truncation)),
        observed_max_z_(observed_max_z),
        truncation_(truncation) {}

  double observed_max_z() const noexcept { return observed_max_z_; }
  double truncation() const noexcept { return truncation_; }

 private:
  double observed_max_z_;
  double truncation_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace pathflow
