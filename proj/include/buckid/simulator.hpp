#pragma once

// Ground-truth window generation: PWM-switched buck trajectories with a load
// step, sampled, ADC-quantized, and optionally corrupted with seeded noise.

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "buckid/converter.hpp"

namespace buckid {

enum class TruthSolver { euler, rk4 };

struct SimConfig {
    double f_sw = 20e3;       // switching frequency (Hz)
    double f_sa = 40e3;       // sampling frequency (Hz)
    double f_p = 1e6;         // prediction-grid frequency (Hz)
    double f_truth = 10e6;    // ground-truth integration frequency (Hz)
    double duty = 0.5;
    double window_length = 1e-3;   // (s)
    double load_pre = 11.52;       // pre-step load resistance (ohm)
    double load_post = 2.88;       // post-step load resistance (ohm)
    double step_time = 0.0;        // load-step instant relative to window start (s)
    int adc_bits = 12;             // 0 disables quantization
    double i_range = 10.0;         // current full scale (A)
    double v_range = 30.0;         // voltage full scale (V)
    double noise_multiple = 0.0;   // noise sigma as multiple of 1 LSB
    std::uint64_t seed = 0;
    TruthSolver truth_solver = TruthSolver::rk4;

    /// Throws validation_error on misaligned grids or out-of-range fields.
    void validate() const;

    [[nodiscard]] double i_res() const;
    [[nodiscard]] double v_res() const;
};

struct MeasurementWindow {
    std::vector<double> t_sa;          // sample times (s), length N
    std::vector<StateVector> x_sa;     // sampled states, length N
    std::vector<SwitchState> s_trace;  // switch state on the prediction grid, length M
    StateVector x0;                    // first sample (== x_sa[0])
    double f_sa = 0.0;
    double f_p = 0.0;
    std::size_t n = 0;
    std::size_t m = 0;
    SimConfig meta;

    [[nodiscard]] double dt_p() const { return 1.0 / f_p; }
};

/// Switching signal at time t: on iff frac(t * f_sw) < duty.
SwitchState pwm_switch_state(double t, double f_sw, double duty);

/// Periodic steady state at the cycle start, found by integrating switching
/// cycles until the cycle-to-cycle change drops below 1e-9 relative.
/// Throws numerical_error if 1e5 cycles do not settle.
StateVector steady_state_init(const CircuitParams& p, double duty,
                              double f_sw = 20e3, double f_int = 10e6,
                              TruthSolver solver = TruthSolver::rk4);

/// Noise-then-quantize ADC stage for one sample. Exposed for statistics tests.
StateVector apply_adc(const StateVector& raw, const SimConfig& cfg,
                      std::mt19937_64& rng);

/// Round half away from zero onto multiples of resolution (<= 0 disables).
double quantize(double value, double resolution);

/// Full window: steady-state init at load_pre, load step, truth integration,
/// sampling, ADC stage, switch trace on the prediction grid.
/// The load resistance inside the window comes from cfg, not from p.R.
MeasurementWindow simulate_window(const SimConfig& cfg, const CircuitParams& p);

/// Benchmark case configurations: 1-3 load steps 25->100/75/50 % of max
/// power with zero noise, 4-6 the case-1 step with noise 5/25/50 LSB.
SimConfig case_catalog(int id);

/// Nominal component values shared by all benchmark cases (R unset here).
CircuitParams table_params();

/// Nominal values with R fixed to the in-window (post-step) load of a case.
CircuitParams case_actual_params(int id);

// --- file formats -----------------------------------------------------------
// stem.csv         header t_s,i_L_A,v_o_V
// stem_switch.csv  header t_s,s
// stem.json        SimConfig fields verbatim
void write_window(const MeasurementWindow& w, const std::filesystem::path& stem);
MeasurementWindow read_window(const std::filesystem::path& csv_path);

}  // namespace buckid
