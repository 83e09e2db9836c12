#pragma once

#include <stdexcept>
#include <string>

namespace cct {

// Base class for every numerical failure raised by this library.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonConvergence : NumericError {
  using NumericError::NumericError;
};
struct SingularJacobian : NumericError {
  using NumericError::NumericError;
};
struct NonFinite : NumericError {
  using NumericError::NumericError;
};
struct QuadratureFailure : NumericError {
  using NumericError::NumericError;
};
struct DegenerateDesign : NumericError {
  using NumericError::NumericError;
};
struct AllCensored : NumericError {
  using NumericError::NumericError;
};
struct TooFewComplete : NumericError {
  using NumericError::NumericError;
};
struct ExtremeWeights : NumericError {
  using NumericError::NumericError;
};
struct UnstableDenominator : NumericError {
  using NumericError::NumericError;
};
struct SingularMoment : NumericError {
  using NumericError::NumericError;
};
struct SingularBread : NumericError {
  using NumericError::NumericError;
};
struct SingularNuisanceInformation : NumericError {
  using NumericError::NumericError;
};
struct NoBracket : NumericError {
  using NumericError::NumericError;
};

// CLI / configuration failures; not numerical.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cct
