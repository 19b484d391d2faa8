#pragma once

#include <stdexcept>
#include <string>

namespace stmp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidConfig : public Error {
 public:
  InvalidConfig(std::string field, std::string reason)
      : Error("invalid config: " + field + ": " + reason),
        field_(std::move(field)),
        reason_(std::move(reason)) {}

  const std::string& field() const { return field_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class NonPositiveDistance : public Error {
 public:
  using Error::Error;
};

class NonPositiveVariance : public Error {
 public:
  using Error::Error;
};

class Diverged : public Error {
 public:
  using Error::Error;
};

class OutOfDomain : public Error {
 public:
  using Error::Error;
};

class DegenerateMixture : public Error {
 public:
  using Error::Error;
};

class GridTooCoarse : public Error {
 public:
  GridTooCoarse(const std::string& what, double estimated_error)
      : Error(what), estimated_error_(estimated_error) {}
  double estimated_error() const { return estimated_error_; }

 private:
  double estimated_error_;
};

class NoActiveDevices : public Error {
 public:
  using Error::Error;
};

/// Transport failure or non-zero status from a score bridge server.
class BridgeError : public Error {
 public:
  explicit BridgeError(const std::string& what, int status = -1)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace stmp
