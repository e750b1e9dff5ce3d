#include "buckid/converter.hpp"

#include <cmath>
#include <string>

namespace buckid {

namespace {

void require_positive(double value, const char* name) {
    if (!std::isfinite(value) || value <= 0.0) {
        throw validation_error(std::string("circuit parameter ") + name +
                               " must be finite and > 0, got " +
                               std::to_string(value));
    }
}

}  // namespace

void CircuitParams::validate() const {
    require_positive(L, "L");
    require_positive(C, "C");
    require_positive(R, "R");
    require_positive(R_C, "R_C");
    require_positive(R_L, "R_L");
    require_positive(R_dson, "R_dson");
    require_positive(V_F, "V_F");
    require_positive(V_i, "V_i");
    if (!(R + R_C > 0.0)) {
        throw validation_error("R + R_C must be > 0");
    }
}

StateMatrices build_matrices(const CircuitParams& p, SwitchState s) {
    p.validate();
    const double sw = switch_value(s);
    const double g = sw * p.R_dson + p.R_L;  // series resistance seen by i_L
    const double d = p.R + p.R_C;

    StateMatrices m;
    m.a11 = -g / p.L;
    m.a12 = -1.0 / p.L;
    m.a21 = (p.R * p.L + p.C * p.R * p.R_C * g) / (p.L * p.C * d);
    m.a22 = -(p.C * p.R * p.R_C + p.L) / (p.L * p.C * d);
    m.b11 = p.V_i / p.L;
    m.b12 = -p.V_F / p.L;
    m.b21 = p.R_C * p.R * p.V_i / (p.L * d);
    m.b22 = -p.R_C * p.R * p.V_F / (p.L * d);
    return m;
}

StateVector state_derivative(const CircuitParams& p, SwitchState s,
                             const StateVector& x) {
    return derivative(build_matrices(p, s), x, s);
}

std::array<StateMatrices, kNumParams> matrix_param_jacobians(
    const CircuitParams& p, SwitchState s) {
    p.validate();
    const double sw = switch_value(s);
    const double g = sw * p.R_dson + p.R_L;
    const double d = p.R + p.R_C;
    const double L = p.L, C = p.C, R = p.R, Rc = p.R_C;
    const double L2 = L * L, C2 = C * C, d2 = d * d;

    std::array<StateMatrices, kNumParams> j{};

    // dA/dL, dB/dL
    j[kL].a11 = g / L2;
    j[kL].a12 = 1.0 / L2;
    j[kL].a21 = -R * Rc * g / (d * L2);
    j[kL].a22 = R * Rc / (L2 * d);
    j[kL].b11 = -p.V_i / L2;
    j[kL].b12 = p.V_F / L2;
    j[kL].b21 = -Rc * R * p.V_i / (L2 * d);
    j[kL].b22 = Rc * R * p.V_F / (L2 * d);

    // dA/dC
    j[kC].a21 = -R / (C2 * d);
    j[kC].a22 = 1.0 / (C2 * d);

    // dA/dR, dB/dR
    j[kR].a21 = (L + C * Rc * g) / (L * C) * Rc / d2;
    j[kR].a22 = (L - C * Rc * Rc) / (L * C * d2);
    j[kR].b21 = Rc * Rc * p.V_i / (L * d2);
    j[kR].b22 = -Rc * Rc * p.V_F / (L * d2);

    // dA/dR_C, dB/dR_C
    j[kRc].a21 = -R / (C * d2) + R * R * g / (L * d2);
    j[kRc].a22 = 1.0 / (C * d2) - R * R / (L * d2);
    j[kRc].b21 = R * R * p.V_i / (L * d2);
    j[kRc].b22 = -R * R * p.V_F / (L * d2);

    // dA/dR_L
    j[kRl].a11 = -1.0 / L;
    j[kRl].a21 = R * Rc / (L * d);

    // dA/dR_dson (enters only through the on-state series resistance)
    j[kRdson].a11 = -sw / L;
    j[kRdson].a21 = sw * R * Rc / (L * d);

    // dB/dV_F
    j[kVf].b12 = -1.0 / L;
    j[kVf].b22 = -Rc * R / (L * d);

    return j;
}

}  // namespace buckid
