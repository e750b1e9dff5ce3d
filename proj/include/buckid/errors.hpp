#pragma once

#include <stdexcept>
#include <string>

namespace buckid {

// Validation failures (bad parameters, misaligned grids, malformed configs).
// The CLI maps these to exit code 2.
struct validation_error : std::invalid_argument {
    explicit validation_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failures (divergence, no convergence, degenerate spectra).
// The CLI maps these to exit code 3.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A predicted trajectory left the admissible region (state magnitude or NaN).
struct divergence_error : numerical_error {
    explicit divergence_error(const std::string& msg) : numerical_error(msg) {}
};

}  // namespace buckid
