#pragma once

#include <stdexcept>
#include <string>

namespace rwkvir {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or image dimensions do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// backward() reached no leaf that requires a gradient.
class MissingGradientError : public Error {
 public:
  using Error::Error;
};

/// Input set is empty (no pixels, no images, no pixel pairs).
class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Correlation requested for a series with zero variance.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

/// Balanced selection cannot be satisfied by the available records.
class InfeasibleSelectionError : public Error {
 public:
  InfeasibleSelectionError(const std::string& what, std::size_t below, std::size_t above)
      : Error(what), below_(below), above_(above) {}
  std::size_t below() const { return below_; }
  std::size_t above() const { return above_; }

 private:
  std::size_t below_;
  std::size_t above_;
};

/// Filesystem or codec failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unknown configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rwkvir
