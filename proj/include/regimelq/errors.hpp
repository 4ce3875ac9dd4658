#pragma once

#include <stdexcept>
#include <string>

namespace regimelq {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data: wrong shapes, non-symmetric weights, bad grids.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Argument outside its documented domain (time outside [0,T], bad regime index).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Generator matrix violates rate or conservation constraints.
class GeneratorError : public Error {
public:
    using Error::Error;
};

/// Probability vector invalid (negative mass or does not sum to one).
class ProbabilityError : public Error {
public:
    using Error::Error;
};

/// A backward integration produced a non-finite value.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, double t) : Error(what), time(t) {}
    double time;
};

/// Riccati positivity floor violated.
class PositivityError : public Error {
public:
    using Error::Error;
};

/// R + P D'D not (numerically) positive definite.
class GainSingularityError : public Error {
public:
    using Error::Error;
};

/// Picard iteration failed to reach tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, double residual)
        : Error(what), lastResidual(residual) {}
    double lastResidual;
};

/// Solutions passed together were produced on different grids.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Expectation target unreachable (feasibility metric zero).
class InfeasibilityError : public Error {
public:
    using Error::Error;
};

/// P0*h20^2 + M1 outside (0,1): frontier formulas undefined.
class FrontierDomainError : public Error {
public:
    using Error::Error;
};

/// Monte Carlo path produced a non-finite state.
class SimulationError : public Error {
public:
    SimulationError(const std::string& what, std::size_t path, double t)
        : Error(what), pathIndex(path), time(t) {}
    std::size_t pathIndex;
    double time;
};

} // namespace regimelq
