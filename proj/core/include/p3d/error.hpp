#pragma once

#include <stdexcept>
#include <string>

namespace p3d {

/// Base of every error raised by the library. Subclasses carry the category
/// the command-line tool maps onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class BoundsError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class ParameterError : public Error { using Error::Error; };
class StepError : public Error { using Error::Error; };
class LookupError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DatasetError : public Error { using Error::Error; };
class WeightError : public Error { using Error::Error; };
class DegenerateSpecError : public Error { using Error::Error; };

/// Raised when a computation produces NaN or infinity.
class NumericError : public Error { using Error::Error; };

}  // namespace p3d
