#pragma once

// Experiment orchestration: benchmark cases x seeded repetitions, summary
// statistics of the percent errors, and report/CSV/JSON emission.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "buckid/landscape.hpp"

namespace buckid {

struct ExperimentSpec {
    std::vector<int> case_ids{1, 2, 3, 4, 5, 6};
    int repetitions = 10;
    std::uint64_t base_seed = 1;
    TrainConfig train;
    bool with_landscape = false;
    LandscapeConfig landscape;

    void validate() const;
};

struct ParamStats {
    double median_err_pct = 0.0;      // signed
    double median_abs_err_pct = 0.0;
    double std_pct = 0.0;             // sample standard deviation
    double q1_pct = 0.0;
    double q3_pct = 0.0;
    double min_pct = 0.0;
    double max_pct = 0.0;
};

struct RunStatistics {
    std::array<ParamStats, kNumParams> params{};
    int total = 0;
    int converged = 0;
    int diverged = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Per-repetition seed, fixed derivation so published numbers reproduce.
std::uint64_t derive_seed(std::uint64_t base, int case_id, int rep);

struct CaseResults {
    int case_id = 0;
    std::vector<EstimationResult> results;  // one per repetition
    std::vector<double> wall_s;             // matching wall-clock times
};

/// Simulates the case window per repetition seed (noise cases redraw noise,
/// all cases redraw the network init) and runs the estimator. A repetition
/// that fails numerically is recorded as a diverged result; the batch
/// continues.
CaseResults run_case(int id, const ExperimentSpec& spec);

/// Percent-error statistics over the converged results; diverged runs only
/// counted. Throws validation_error on empty input.
RunStatistics summarize(const std::vector<EstimationResult>& results);

struct ExperimentReport {
    ExperimentSpec spec;
    std::vector<CaseResults> cases;
    std::vector<CaseLandscape> landscapes;            // empty unless requested
    std::array<ParamClass, kNumParams> classes{};
    bool has_classification = false;
};

ExperimentReport run_experiment(const ExperimentSpec& spec);

/// Writes summary.json, results_case<k>.json, sweep CSVs, probe JSONs,
/// classification.json (when landscape ran) and report.md into out_dir.
void emit_report(const ExperimentReport& report,
                 const std::filesystem::path& out_dir);

/// Rebuilds summary.json and report.md from results_case<k>.json (and any
/// landscape artifacts) already present in dir.
void rebuild_report(const std::filesystem::path& dir);

TrainConfig train_config_from_json(const std::string& text);

/// Median of wall-clock seconds across the converged runs of a case.
double median_wall_seconds(const CaseResults& c);

}  // namespace buckid
