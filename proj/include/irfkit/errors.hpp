#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace irfkit {

/// Base class for every error raised by the library. `kind()` returns the
/// stable identifier used in certificates and CLI diagnostics.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual const char* kind() const noexcept { return "Error"; }
};

#define IRFKIT_DEFINE_ERROR(Name)                                          \
  class Name : public Error {                                              \
   public:                                                                 \
    using Error::Error;                                                    \
    [[nodiscard]] const char* kind() const noexcept override { return #Name; } \
  }

IRFKIT_DEFINE_ERROR(ParamError);
IRFKIT_DEFINE_ERROR(DimensionError);
IRFKIT_DEFINE_ERROR(SignalRangeError);
IRFKIT_DEFINE_ERROR(ProbabilityLawError);
IRFKIT_DEFINE_ERROR(EnumerationCapError);
IRFKIT_DEFINE_ERROR(InsufficientSamplesError);
IRFKIT_DEFINE_ERROR(SamplerError);
IRFKIT_DEFINE_ERROR(MatrixError);
IRFKIT_DEFINE_ERROR(InfeasibleFloorError);
IRFKIT_DEFINE_ERROR(NotContractiveError);
IRFKIT_DEFINE_ERROR(MetricSingularError);
IRFKIT_DEFINE_ERROR(ConfigError);

#undef IRFKIT_DEFINE_ERROR

/// Raised when a map or signal evaluation produces NaN or infinity.
/// `component()` names the failing piece ("agent 3 transition", "filter", ...).
class NumericalError : public Error {
 public:
  NumericalError(const std::string& component, const std::string& what)
      : Error(what), component_(component) {}
  [[nodiscard]] const char* kind() const noexcept override { return "NumericalError"; }
  [[nodiscard]] const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

}  // namespace irfkit
