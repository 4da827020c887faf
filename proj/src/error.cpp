#include "sae/error.hpp"

namespace sae {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::WeightedAdjacency: return "WeightedAdjacency";
    case ErrorKind::IsolatedRegion: return "IsolatedRegion";
    case ErrorKind::Disconnected: return "Disconnected";
    case ErrorKind::RhoOutOfRange: return "RhoOutOfRange";
    case ErrorKind::NonPositiveScale: return "NonPositiveScale";
    case ErrorKind::SigmaNotPD: return "SigmaNotPD";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnboundInput: return "UnboundInput";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::KMismatch: return "KMismatch";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::NonPositiveEstimate: return "NonPositiveEstimate";
    case ErrorKind::BadLevel: return "BadLevel";
    case ErrorKind::InvertedInterval: return "InvertedInterval";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::HashMismatch: return "HashMismatch";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteInit: return "NonFiniteInit";
    case ErrorKind::GradientCheckFailed: return "GradientCheckFailed";
    case ErrorKind::AllDivergent: return "AllDivergent";
    case ErrorKind::TooFewDraws: return "TooFewDraws";
  }
  return "Unknown";
}

bool is_validation_error(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NonFiniteInit:
    case ErrorKind::GradientCheckFailed:
    case ErrorKind::AllDivergent:
    case ErrorKind::TooFewDraws:
      return false;
    default:
      return true;
  }
}

}  // namespace sae
