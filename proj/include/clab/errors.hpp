#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clab {

// Every failure the library reports carries one of these codes. The CLI maps
// them onto distinct process exit codes (see tools/clab.cpp).
enum class ErrorCode {
  NonPositiveRadius = 1,
  DegenerateResolution,
  VanishingGradient,
  FlowEscape,
  NoAdmissibleMu,
  NonSymmetricDiffusion,
  OverflowGuard,
  EllipticityViolated,
  BoundaryFlagInvalid,
  SolverDivergence,
  ShapeMismatch,
  NewtonDivergence,
  QuadratureFailure,
  CompatibilityViolated,
  SingularRecovery,
  WeightGridMismatch,
  EmptyCorpus,
  ClassEmpty,
  RejectionExhausted,
  ProjectionFailure,
  InvalidArgument,
  ConfigParse,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveRadius: return "NonPositiveRadius";
    case ErrorCode::DegenerateResolution: return "DegenerateResolution";
    case ErrorCode::VanishingGradient: return "VanishingGradient";
    case ErrorCode::FlowEscape: return "FlowEscape";
    case ErrorCode::NoAdmissibleMu: return "NoAdmissibleMu";
    case ErrorCode::NonSymmetricDiffusion: return "NonSymmetricDiffusion";
    case ErrorCode::OverflowGuard: return "OverflowGuard";
    case ErrorCode::EllipticityViolated: return "EllipticityViolated";
    case ErrorCode::BoundaryFlagInvalid: return "BoundaryFlagInvalid";
    case ErrorCode::SolverDivergence: return "SolverDivergence";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NewtonDivergence: return "NewtonDivergence";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
    case ErrorCode::CompatibilityViolated: return "CompatibilityViolated";
    case ErrorCode::SingularRecovery: return "SingularRecovery";
    case ErrorCode::WeightGridMismatch: return "WeightGridMismatch";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ClassEmpty: return "ClassEmpty";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::ProjectionFailure: return "ProjectionFailure";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigParse: return "ConfigParse";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace clab
