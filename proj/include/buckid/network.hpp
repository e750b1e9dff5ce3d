#pragma once

// The [2 x 16 x 16 x 7] estimator network: tanh hidden layers, sigmoid
// output clamping every normalized parameter into (0, 1), denormalized as
// out * range_factor * nominal (so 1.0 maps to 500 % of nominal).

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "buckid/converter.hpp"

namespace buckid {

inline constexpr int kInputDim = 2;
inline constexpr int kHiddenDim = 16;
inline constexpr int kOutputDim = 7;

struct Network {
    std::array<std::array<double, kInputDim>, kHiddenDim> w1{};
    std::array<double, kHiddenDim> b1{};
    std::array<std::array<double, kHiddenDim>, kHiddenDim> w2{};
    std::array<double, kHiddenDim> b2{};
    std::array<std::array<double, kHiddenDim>, kOutputDim> w3{};
    std::array<double, kOutputDim> b3{};

    std::array<double, kInputDim> input_scale{10.0, 30.0};  // (A, V) full scales
    CircuitParams nominal;   // 100 % reference for denormalization
    double range_factor = 5.0;

    static constexpr std::size_t weight_count() {
        return kHiddenDim * kInputDim + kHiddenDim +
               kHiddenDim * kHiddenDim + kHiddenDim +
               kOutputDim * kHiddenDim + kOutputDim;
    }
};

/// Activations kept for the reverse pass.
struct ForwardTrace {
    std::array<double, kInputDim> in{};
    std::array<double, kHiddenDim> z1{};
    std::array<double, kHiddenDim> z2{};
    std::array<double, kOutputDim> out{};
};

ForwardTrace forward_trace(const Network& net, const StateVector& x0);

/// Normalized parameter estimates in (0,1)^7.
std::array<double, kOutputDim> forward(const Network& net, const StateVector& x0);

/// theta_k = out_k * range_factor * nominal_k; V_i copied from nominal.
CircuitParams denormalize(const std::array<double, kOutputDim>& out,
                          const CircuitParams& nominal, double range_factor);

/// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for all weights and biases.
void init_weights(Network& net, std::mt19937_64& rng);

/// Solve the output biases so that forward(net, x0) lands exactly on
/// target_fraction (fractions of nominal, e.g. 1.0 == 100 %).
void preset_output_bias(Network& net, const StateVector& x0,
                        const std::array<double, kOutputDim>& target_fraction);

// Flat views used by the optimizers; ordering w1,b1,w2,b2,w3,b3 row-major.
std::vector<double> flatten(const Network& net);
void unflatten(Network& net, const std::vector<double>& v);

}  // namespace buckid
