#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sae {

enum class ErrorKind {
  // input validation
  Parse,
  SelfLoop,
  DuplicateEdge,
  WeightedAdjacency,
  IsolatedRegion,
  Disconnected,
  RhoOutOfRange,
  NonPositiveScale,
  SigmaNotPD,
  ShapeMismatch,
  UnboundInput,
  NonScalarLoss,
  DimMismatch,
  KMismatch,
  SingularDesign,
  NonPositiveEstimate,
  BadLevel,
  InvertedInterval,
  InvalidConfig,
  Io,
  // artifacts
  VersionUnsupported,
  CorruptFile,
  HashMismatch,
  // numerics / sampling
  NonFiniteLoss,
  NonFiniteInit,
  GradientCheckFailed,
  AllDivergent,
  TooFewDraws,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for errors caused by bad user input (CLI exit code 2); the rest are
/// sampling or numerical failures (exit code 3).
bool is_validation_error(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sae
