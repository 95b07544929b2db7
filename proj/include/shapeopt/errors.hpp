#pragma once

#include <stdexcept>
#include <string>

namespace shapeopt {

/// Base class for all domain errors raised by the toolkit.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid user-supplied configuration (bad geometry, unrepresentable grid, ...).
struct ConfigError : Error { using Error::Error; };

/// Mesh generator produced or would produce an invalid triangulation.
struct GeneratorError : Error { using Error::Error; };

/// Linear or eigenvalue solver failure.
struct SolverError : Error { using Error::Error; };

/// A direction-finding routine failed to produce a usable direction.
struct DirectionError : Error { using Error::Error; };

/// Area projection would invert a triangle.
struct ProjectionError : Error { using Error::Error; };

/// Armijo search exhausted the step sizes above t_min.
struct LineSearchError : Error { using Error::Error; };

/// An API precondition was violated by the caller.
struct ContractViolation : Error { using Error::Error; };

}  // namespace shapeopt
