// Command-line front end: simulate benchmark windows, run the estimator,
// sweep loss landscapes, and orchestrate full experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "buckid/harness.hpp"

namespace {

using namespace buckid;

std::vector<int> parse_cases(const std::string& text) {
    std::vector<int> ids;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        const auto dash = token.find('-');
        if (dash != std::string::npos) {
            const int lo = std::stoi(token.substr(0, dash));
            const int hi = std::stoi(token.substr(dash + 1));
            for (int id = lo; id <= hi; ++id) ids.push_back(id);
        } else if (!token.empty()) {
            ids.push_back(std::stoi(token));
        }
    }
    if (ids.empty()) throw validation_error("no case ids in '" + text + "'");
    return ids;
}

TrainConfig load_train_config(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    std::ifstream in(path);
    if (!in) throw validation_error("cannot read train config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return train_config_from_json(ss.str());
}

void apply_grid(LandscapeConfig& cfg, const std::string& grid) {
    if (grid.empty()) return;
    double lo = 0.0, hi = 0.0;
    int n = 0;
    if (std::sscanf(grid.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 3 ||
        !(hi > lo) || !(lo > 0.0)) {
        throw validation_error("grid must be LO:HI:N with 0 < LO < HI, N >= 3");
    }
    cfg.wide_lo = lo;
    cfg.wide_hi = hi;
    cfg.wide_count = n;
}

int run_simulate(int case_id, std::uint64_t seed, const std::string& out_dir) {
    SimConfig cfg = case_catalog(case_id);
    cfg.seed = seed;
    const MeasurementWindow window = simulate_window(cfg, table_params());
    std::filesystem::create_directories(out_dir);
    const auto stem = std::filesystem::path(out_dir) / "window";
    write_window(window, stem);
    std::cout << "wrote " << stem.string() << ".csv, _switch.csv, .json (N="
              << window.n << ", M=" << window.m << ")\n";
    return 0;
}

int run_estimate(const std::string& window_path, const std::string& cfg_path,
                 std::uint64_t seed, bool seed_given, const std::string& out) {
    const MeasurementWindow window = read_window(window_path);
    TrainConfig train = load_train_config(cfg_path);
    if (seed_given) train.seed = seed;
    CircuitParams nominal = table_params();
    nominal.R = window.meta.load_post;
    const EstimationResult result = estimate(window, nominal, train);
    const std::string text = result_to_json(result) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out);
        if (!f) throw validation_error("cannot write " + out);
        f << text;
        std::cout << "wrote " << out << "\n";
    }
    return 0;
}

int run_landscape(const std::string& case_arg, const std::string& param,
                  const std::string& grid, std::uint64_t seed,
                  const std::string& out_dir) {
    LandscapeConfig cfg;
    apply_grid(cfg, grid);

    std::vector<int> ids;
    if (case_arg == "all") {
        ids = {1, 2, 3, 4, 5, 6};
    } else {
        ids = {std::stoi(case_arg)};
    }

    std::filesystem::create_directories(out_dir);
    std::vector<CaseLandscape> analyzed;
    for (int id : ids) {
        SimConfig sim = case_catalog(id);
        sim.seed = splitmix64(derive_seed(seed, id, 0));
        const MeasurementWindow window = simulate_window(sim, table_params());
        const CircuitParams actual = case_actual_params(id);

        if (param != "all") {
            // Single-parameter sweep, wide grid only.
            std::size_t index = kNumParams;
            for (std::size_t k = 0; k < kNumParams; ++k) {
                if (param == kParamNames[k]) index = k;
            }
            if (index == kNumParams) {
                throw validation_error("unknown parameter name " + param);
            }
            SweepSpec spec;
            spec.param_index = index;
            spec.base = actual;
            spec.weights = LossWeights::normalized(window);
            spec.lo_pct = cfg.wide_lo;
            spec.hi_pct = cfg.wide_hi;
            spec.count = cfg.wide_count;
            const SweepResult sweep = sweep_loss(window, spec);
            const auto path = std::filesystem::path(out_dir) /
                              ("sweep_case" + std::to_string(id) + "_" + param +
                               ".csv");
            std::ofstream f(path);
            f << "param,grid_pct,loss\n";
            char buf[64];
            for (std::size_t i = 0; i < sweep.grid_pct.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g,%.17g", sweep.grid_pct[i],
                              sweep.loss[i]);
                f << param << ',' << buf << '\n';
            }
            std::cout << "wrote " << path.string() << "\n";
            continue;
        }

        CaseLandscape l = analyze_case(window, actual, id, cfg);
        const std::string id_str = std::to_string(id);
        write_sweeps_csv(l.wide, std::filesystem::path(out_dir) /
                                     ("sweeps_case" + id_str + "_wide.csv"));
        write_sweeps_csv(l.fine, std::filesystem::path(out_dir) /
                                     ("sweeps_case" + id_str + "_fine.csv"));
        std::ofstream f(std::filesystem::path(out_dir) /
                        ("hessian_case" + id_str + ".json"));
        f << probes_to_json(l.probes) << "\n";
        analyzed.push_back(std::move(l));
        std::cout << "analyzed case " << id << "\n";
    }
    if (param == "all" && analyzed.size() == ids.size() && !analyzed.empty()) {
        const auto classes = classify(analyzed, cfg.thresholds);
        std::ofstream f(std::filesystem::path(out_dir) / "classification.json");
        f << classes_to_json(classes) << "\n";
        std::cout << "wrote classification.json\n";
    }
    return 0;
}

int run_experiment_cmd(const std::string& cases, int reps, std::uint64_t seed,
                       const std::string& cfg_path, bool with_landscape,
                       const std::string& out_dir) {
    ExperimentSpec spec;
    spec.case_ids = parse_cases(cases);
    spec.repetitions = reps;
    spec.base_seed = seed;
    spec.train = load_train_config(cfg_path);
    spec.with_landscape = with_landscape;
    const ExperimentReport report = run_experiment(spec);
    emit_report(report, out_dir);
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Buck converter parameter identification and loss-landscape analysis"};
    app.require_subcommand(1);

    int case_id = 1;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
    auto* sim = app.add_subcommand("simulate", "generate a benchmark window");
    sim->add_option("--case", case_id, "case id 1..6")->required();
    sim->add_option("--seed", seed, "noise seed");
    sim->add_option("--out", out_dir, "output directory");

    std::string window_path, train_cfg, out_file;
    std::uint64_t est_seed = 0;
    auto* est = app.add_subcommand("estimate", "estimate parameters from a window");
    est->add_option("--window", window_path, "window CSV path")->required();
    est->add_option("--train-cfg", train_cfg, "training config JSON");
    auto* est_seed_opt = est->add_option("--seed", est_seed, "weight-init seed");
    est->add_option("--out", out_file, "result JSON path (stdout when absent)");

    std::string land_case = "1", land_param = "all", grid;
    std::uint64_t land_seed = 1;
    std::string land_out = ".";
    auto* land = app.add_subcommand("landscape", "sweep the training loss");
    land->add_option("--case", land_case, "case id 1..6 or 'all'");
    land->add_option("--param", land_param, "parameter name or 'all'");
    land->add_option("--grid", grid, "LO:HI:N percent grid override");
    land->add_option("--seed", land_seed, "window seed");
    land->add_option("--out", land_out, "output directory");

    std::string exp_cases = "1-6";
    int reps = 10;
    std::uint64_t exp_seed = 1;
    std::string exp_cfg, exp_out = "out";
    bool exp_landscape = false;
    auto* exp = app.add_subcommand("experiment", "run cases x repetitions");
    exp->add_option("--cases", exp_cases, "e.g. 1-6 or 1,4,6");
    exp->add_option("--reps", reps, "repetitions per case");
    exp->add_option("--seed", exp_seed, "base seed");
    exp->add_option("--train-cfg", exp_cfg, "training config JSON");
    exp->add_flag("--landscape", exp_landscape, "also run landscape analysis");
    exp->add_option("--out", exp_out, "output directory");

    std::string report_dir;
    auto* rep = app.add_subcommand("report", "rebuild summary from result files");
    rep->add_option("--in", report_dir, "directory with results_case<k>.json")
        ->required();

    try {
        app.parse(argc, argv);
        if (sim->parsed()) return run_simulate(case_id, seed, out_dir);
        if (est->parsed()) {
            return run_estimate(window_path, train_cfg, est_seed,
                                est_seed_opt->count() > 0, out_file);
        }
        if (land->parsed()) {
            return run_landscape(land_case, land_param, grid, land_seed, land_out);
        }
        if (exp->parsed()) {
            return run_experiment_cmd(exp_cases, reps, exp_seed, exp_cfg,
                                      exp_landscape, exp_out);
        }
        if (rep->parsed()) {
            rebuild_report(report_dir);
            std::cout << "report rebuilt in " << report_dir << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
