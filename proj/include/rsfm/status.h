#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace rsfm {

enum class ErrorCode {
  kOk,
  kTotalInternalReflection,
  kNoIntersection,
  kParallelLines,
  kCentralCamera,
  kDegenerateAxialRay,
  kDiverged,
  kOptimizationFailed,
  kDegenerate,
  kNoSolution,
  kNumericalFailure,
  kNoParallax,
  kInsufficientAngle,
  kCheiralityViolation,
  kRansacFailed,
  kMaxIterations,
  kGaugeUnderconstrained,
  kInitializationFailed,
  kRegistrationFailed,
  kInsufficientOverlap,
  kGenerationFailed,
  kInvalidArgument,
  kConfigError,
};

const char* ErrorCodeName(ErrorCode code);

struct Error {
  ErrorCode code;
  std::string message;
};

// Minimal value-or-error holder; std::expected is not available in C++20.
template <typename T>
class Expected {
 public:
  Expected(T value) : data_(std::move(value)) {}  // NOLINT
  Expected(Error error) : data_(std::move(error)) {}  // NOLINT
  Expected(ErrorCode code, std::string message = {})
      : data_(Error{code, std::move(message)}) {}

  bool ok() const { return std::holds_alternative<T>(data_); }
  explicit operator bool() const { return ok(); }

  const T& value() const& {
    if (!ok()) {
      throw std::logic_error(std::string("Expected::value() on error: ") +
                             ErrorCodeName(error().code) + " " +
                             error().message);
    }
    return std::get<T>(data_);
  }
  T& value() & {
    if (!ok()) {
      throw std::logic_error(std::string("Expected::value() on error: ") +
                             ErrorCodeName(error().code) + " " +
                             error().message);
    }
    return std::get<T>(data_);
  }
  T&& value() && { return std::move(this->value()); }

  const T& operator*() const& { return value(); }
  T& operator*() & { return value(); }
  const T* operator->() const { return &value(); }
  T* operator->() { return &value(); }

  const Error& error() const { return std::get<Error>(data_); }
  // kOk when a value is held.
  ErrorCode code() const { return ok() ? ErrorCode::kOk : error().code; }

 private:
  std::variant<T, Error> data_;
};

}  // namespace rsfm
