#pragma once

// Parameter estimation: forward-Euler state prediction, downsampled MSE
// loss, analytic full-chain gradients (forward sensitivities through the
// recurrence, reverse pass through the network), and the Adam -> L-BFGS
// training schedule.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "buckid/network.hpp"
#include "buckid/simulator.hpp"

namespace buckid {

struct LossWeights {
    double w_i = 1.0;
    double w_v = 1.0;

    static LossWeights unit() { return {1.0, 1.0}; }
    /// 1/max|i_L|^2 and 1/max|v_o|^2 over the window, so both channels
    /// contribute on comparable scales.
    static LossWeights normalized(const MeasurementWindow& w);
};

enum class WeightMode { normalized, unit, custom };

struct TrainConfig {
    double lr_adam = 0.025;
    double lr_lbfgs = 0.05;
    int max_epochs_adam = 250;
    int max_epochs_lbfgs = 50;
    double tolerance = 1e-6;  // max-norm change of the normalized outputs
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int lbfgs_history = 10;
    WeightMode weight_mode = WeightMode::normalized;
    LossWeights custom_weights;
    std::uint64_t seed = 0;
    // Fixed initial estimates as fractions of nominal (1.0 == 100 %).
    // When absent, each run draws uniformly from [0.5, 1.5].
    std::optional<std::array<double, kNumParams>> init_targets;

    void validate() const;
    [[nodiscard]] LossWeights weights_for(const MeasurementWindow& w) const;
};

struct EstimationResult {
    CircuitParams theta_hat;
    std::array<double, kNumParams> theta_hat_pct{};  // percent of nominal
    std::vector<double> loss_history;                // E at each recorded point
    std::vector<std::array<double, kNumParams>> theta_history_pct;
    int epochs_adam = 0;
    int epochs_lbfgs = 0;
    bool converged = false;
    std::string reason;  // "tolerance" | "max_epoch" | "diverged"
    std::uint64_t seed = 0;
    int divergence_resets = 0;
};

/// x(1) = x0; x(j) = x(j-1) + dx/dt * dt_p, switching per s_trace.
/// Throws divergence_error when a state exceeds 1e6 or becomes non-finite.
std::vector<StateVector> predict_trajectory(const CircuitParams& p,
                                            const StateVector& x0,
                                            const std::vector<SwitchState>& s_trace,
                                            double dt_p);

struct SensitivityTrajectory {
    std::vector<StateVector> states;
    // tangents[j][k] = d states[j] / d theta_k (SI units)
    std::vector<std::array<StateVector, kNumParams>> tangents;
};

/// The same recurrence with forward-mode tangents for all seven parameters.
SensitivityTrajectory predict_with_sensitivity(const CircuitParams& p,
                                               const StateVector& x0,
                                               const std::vector<SwitchState>& s_trace,
                                               double dt_p);

/// Downsampled weighted MSE between prediction (length M) and samples
/// (length N); stride M/N must be exact.
double training_loss(const std::vector<StateVector>& pred,
                     const MeasurementWindow& window, const LossWeights& w);

struct NetworkGradients {
    std::array<std::array<double, kInputDim>, kHiddenDim> w1{};
    std::array<double, kHiddenDim> b1{};
    std::array<std::array<double, kHiddenDim>, kHiddenDim> w2{};
    std::array<double, kHiddenDim> b2{};
    std::array<std::array<double, kHiddenDim>, kOutputDim> w3{};
    std::array<double, kOutputDim> b3{};
};

std::vector<double> flatten(const NetworkGradients& g);

struct GradientResult {
    double loss = 0.0;
    std::array<double, kNumParams> d_loss_d_theta{};  // SI units
    NetworkGradients weights;
};

/// Full chain: dE/dtheta by sensitivity propagation, then reverse mode
/// through denormalization and the network.
GradientResult loss_gradient(const Network& net, const MeasurementWindow& window,
                             const LossWeights& w);

/// Adam phase then L-BFGS phase, stopping early once the max-norm change of
/// the normalized outputs between consecutive epochs drops below tolerance.
/// Throws numerical_error if every epoch diverged.
EstimationResult estimate(const MeasurementWindow& window,
                          const CircuitParams& nominal, const TrainConfig& cfg);

std::string result_to_json(const EstimationResult& r);
EstimationResult result_from_json(const std::string& text);

}  // namespace buckid
