#pragma once

// Loss-landscape diagnostics: per-parameter sweeps of the training loss,
// finite-difference gradient/Hessian in normalized coordinates, Jacobi
// eigendecomposition, condition numbers, smoothness metrics, and the
// reliable / condition-dependent / unreliable classification.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "buckid/estimator.hpp"

namespace buckid {

struct SweepSpec {
    std::size_t param_index = 0;
    double lo_pct = 50.0;
    double hi_pct = 150.0;
    int count = 201;
    CircuitParams base;   // actual values; non-swept parameters stay here
    LossWeights weights;

    void validate() const;
};

struct SweepResult {
    std::size_t param_index = 0;
    std::vector<double> grid_pct;
    std::vector<double> loss;
    std::vector<std::uint8_t> diverged;  // sentinel-loss flags per grid point

    [[nodiscard]] double peak() const;
    [[nodiscard]] double min_loss() const;
    [[nodiscard]] double argmin_pct() const;
};

/// Training loss along one normalized parameter axis; divergent grid points
/// are recorded with a large sentinel loss and flagged.
SweepResult sweep_loss(const MeasurementWindow& window, const SweepSpec& spec);

using NormalizedLossFn = std::function<double(const ParamArray&)>;

// Central differences with relative step h on an arbitrary scalar function
// of normalized coordinates. Throws validation_error when h underflows
// double resolution.
std::array<double, kNumParams> fd_gradient_fn(const NormalizedLossFn& f,
                                              const ParamArray& point,
                                              double h = 1e-4);
std::vector<double> fd_hessian_fn(const NormalizedLossFn& f,
                                  const ParamArray& point, double h = 1e-4);

/// Central differences of E in normalized coordinates theta_k / actual_k,
/// relative step h.
std::array<double, kNumParams> fd_gradient(const MeasurementWindow& window,
                                           const CircuitParams& point,
                                           const CircuitParams& actual,
                                           const LossWeights& w, double h = 1e-4);

/// Symmetrized 7x7 central-difference Hessian, row-major.
std::vector<double> fd_hessian(const MeasurementWindow& window,
                               const CircuitParams& point,
                               const CircuitParams& actual,
                               const LossWeights& w, double h = 1e-4);

struct EigResult {
    std::vector<double> values;   // descending
    std::vector<double> vectors;  // row-major n x n, column j pairs values[j]
};

/// Cyclic Jacobi rotations for a symmetric matrix; iterates until the
/// off-diagonal Frobenius norm falls below 1e-12 * ||H||_F.
EigResult eig_symmetric(const std::vector<double>& h, std::size_t n);

/// max|lambda| / min|lambda| over eigenvalues above 1e-14 * max|lambda|;
/// +infinity when all but one are filtered out.
double condition_number(const std::vector<double>& eigenvalues);

struct SmoothnessMetrics {
    double total_variation = 0.0;  // sum |dE| normalized by peak E
    int local_minima = 0;          // strict interior minima
};

SmoothnessMetrics smoothness_metrics(const std::vector<double>& grid_pct,
                                     const std::vector<double>& loss);

enum class ParamClass { reliable, condition_dependent, unreliable };

const char* to_string(ParamClass c);

struct ClassifyThresholds {
    double magnitude_ratio = 10.0;      // reliable: peak within this factor of the max
    int reliable_minima_max = 1;        // reliable: at most this many minima near 100 %
    int unreliable_minima_min = 3;      // unreliable: at least this many minima
    double argmin_distance_pct = 20.0;  // unreliable: sweep minimum farther than this
};

struct LandscapeConfig {
    double wide_lo = 50.0, wide_hi = 150.0;
    int wide_count = 201;
    double fine_lo = 90.0, fine_hi = 110.0;  // oscillation-counting grid
    int fine_count = 401;
    double fd_step = 1e-4;
    double probe_delta_pct = 20.0;
    ClassifyThresholds thresholds;
};

struct ProbeReport {
    std::string label;
    std::array<double, kNumParams> point_pct{};
    std::vector<double> hessian;      // row-major 7x7
    std::vector<double> eigenvalues;  // descending
    double condition_number = 0.0;
};

struct CaseLandscape {
    int case_id = 0;
    std::array<SweepResult, kNumParams> wide;
    std::array<SweepResult, kNumParams> fine;
    std::array<SmoothnessMetrics, kNumParams> wide_smoothness;
    std::array<SmoothnessMetrics, kNumParams> fine_smoothness;
    std::vector<ProbeReport> probes;
};

/// Sweeps every parameter on both grids and probes the Hessian at the
/// actual-parameter point plus single-parameter +-probe_delta deviations of
/// {L, C, R, R_C}.
CaseLandscape analyze_case(const MeasurementWindow& window,
                           const CircuitParams& actual, int case_id,
                           const LandscapeConfig& cfg);

/// Cross-case classification; requires at least one analyzed case.
std::array<ParamClass, kNumParams> classify(const std::vector<CaseLandscape>& cases,
                                            const ClassifyThresholds& th);

void write_sweeps_csv(const std::array<SweepResult, kNumParams>& sweeps,
                      const std::filesystem::path& path);
std::string probes_to_json(const std::vector<ProbeReport>& probes);
std::string classes_to_json(const std::array<ParamClass, kNumParams>& classes);

}  // namespace buckid
