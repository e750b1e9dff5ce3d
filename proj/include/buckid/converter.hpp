#pragma once

// Switched state-space model of a buck converter: parameter set, state
// vector, and the A/B matrices for both switch positions.

#include <array>
#include <cstddef>
#include <cstdint>

#include "buckid/errors.hpp"

namespace buckid {

// Index order of the estimated parameters, used everywhere a 7-vector
// appears (network outputs, gradients, sweeps, reports).
inline constexpr std::size_t kL = 0;
inline constexpr std::size_t kC = 1;
inline constexpr std::size_t kR = 2;
inline constexpr std::size_t kRc = 3;
inline constexpr std::size_t kRl = 4;
inline constexpr std::size_t kRdson = 5;
inline constexpr std::size_t kVf = 6;
inline constexpr std::size_t kNumParams = 7;

inline constexpr std::array<const char*, kNumParams> kParamNames = {
    "L", "C", "R", "R_C", "R_L", "R_dson", "V_F"};

using ParamArray = std::array<double, kNumParams>;

/// Physical parameters in strict SI units (H, F, ohm, V). V_i is a known
/// source voltage and is never estimated.
struct CircuitParams {
    double L = 0.0;       // inductance (H)
    double C = 0.0;       // capacitance (F)
    double R = 0.0;       // load resistance (ohm)
    double R_C = 0.0;     // capacitor ESR (ohm)
    double R_L = 0.0;     // inductor ESR (ohm)
    double R_dson = 0.0;  // MOSFET on-state resistance (ohm)
    double V_F = 0.0;     // diode forward voltage (V)
    double V_i = 0.0;     // input voltage (V), fixed

    /// Throws validation_error unless every field is finite and > 0.
    void validate() const;

    /// The seven estimated values in canonical index order.
    [[nodiscard]] ParamArray estimated() const {
        return {L, C, R, R_C, R_L, R_dson, V_F};
    }

    static CircuitParams from_estimated(const ParamArray& v, double v_i) {
        return {v[kL], v[kC], v[kR], v[kRc], v[kRl], v[kRdson], v[kVf], v_i};
    }
};

struct StateVector {
    double i_L = 0.0;  // inductor current (A)
    double v_o = 0.0;  // output voltage (V)
};

enum class SwitchState : std::uint8_t { off = 0, on = 1 };

inline double switch_value(SwitchState s) {
    return s == SwitchState::on ? 1.0 : 0.0;
}

/// Entries of dx/dt = A x + B u with u = [S, 1-S]^T.
struct StateMatrices {
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
    double b11 = 0.0, b12 = 0.0, b21 = 0.0, b22 = 0.0;
};

/// Closed-form A and B for a given switch position. Validates p.
StateMatrices build_matrices(const CircuitParams& p, SwitchState s);

/// Analytic derivatives of every A/B entry with respect to each of the
/// seven estimated parameters, same switch position convention.
std::array<StateMatrices, kNumParams> matrix_param_jacobians(
    const CircuitParams& p, SwitchState s);

// A x + B u from prebuilt matrices. Both the simulator's Euler mode and the
// trajectory predictor run through this one inline path, so their arithmetic
// is identical step for step.
inline StateVector derivative(const StateMatrices& m, const StateVector& x,
                              SwitchState s) {
    const double u_on = switch_value(s);
    const double u_off = 1.0 - u_on;
    return {m.a11 * x.i_L + m.a12 * x.v_o + m.b11 * u_on + m.b12 * u_off,
            m.a21 * x.i_L + m.a22 * x.v_o + m.b21 * u_on + m.b22 * u_off};
}

inline StateVector euler_step(const StateMatrices& m, const StateVector& x,
                              SwitchState s, double dt) {
    const StateVector d = derivative(m, x, s);
    return {x.i_L + d.i_L * dt, x.v_o + d.v_o * dt};
}

/// dx/dt = A x + B u evaluated from scratch (builds matrices internally).
StateVector state_derivative(const CircuitParams& p, SwitchState s,
                             const StateVector& x);

}  // namespace buckid
