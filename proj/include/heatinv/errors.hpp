#pragma once

#include <stdexcept>
#include <string>

namespace heatinv {

/// Invalid input: dimension mismatches, out-of-range parameters, malformed
/// configuration. Maps to CLI exit code 1.
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// An iterative solver failed to reach its tolerance. Carries the final
/// relative residual and the iteration count. Maps to CLI exit code 2.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, double residual, std::size_t iterations)
        : std::runtime_error(what), final_residual(residual), iterations(iterations) {}

    double final_residual = 0.0;
    std::size_t iterations = 0;
};

/// Malformed input file (bad JSON, inconsistent field lengths). Maps to CLI
/// exit code 3 alongside IoError.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem failure: unreadable or unwritable path.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace heatinv
