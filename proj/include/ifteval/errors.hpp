#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ifteval {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// 0 success, 2 validation, 3 transport, 4 data contract.
class Error : public std::runtime_error {
 public:
  Error(std::string message, int exit_code)
      : std::runtime_error(std::move(message)), exit_code_(exit_code) {}

  int exit_code() const noexcept { return exit_code_; }

 private:
  int exit_code_;
};

// Bad configuration: unknown scorer names, missing files referenced by a
// config, flag misuse. Raised before any network or heavy work happens.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message) : Error(message, 2) {}
};

// Provider endpoint unreachable or still failing after the bounded retry
// schedule ran out.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message) : Error(message, 3) {}
};

// Provider responded, but the body does not conform to the expected wire
// format (missing choices, ragged embedding dimensions, ...).
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& message) : Error(message, 3) {}
};

// Input data violates a documented precondition or invariant: corpus schema
// errors, duplicate ids, ratios not summing to one, task mismatches.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message) : Error(message, 4) {}
};

// Not enough samples to satisfy a mixture request.
class CapacityError : public ContractError {
 public:
  explicit CapacityError(const std::string& message) : ContractError(message) {}
};

// Rank correlation asked for on a constant vector. Kept as a hard error so
// reports never silently contain NaN.
class UndefinedCorrelationError : public ContractError {
 public:
  explicit UndefinedCorrelationError(const std::string& message)
      : ContractError(message) {}
};

}  // namespace ifteval
