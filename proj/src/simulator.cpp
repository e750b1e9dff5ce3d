#include "buckid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace buckid {

namespace {

// Integer ratio of two grid frequencies, or 0 if they do not divide.
std::int64_t exact_ratio(double fast, double slow) {
    if (!(fast > 0.0) || !(slow > 0.0)) return 0;
    const double r = fast / slow;
    const double n = std::round(r);
    if (n < 1.0 || std::abs(r - n) > 1e-9 * n) return 0;
    return static_cast<std::int64_t>(n);
}

std::int64_t require_ratio(double fast, double slow, const char* what) {
    const std::int64_t n = exact_ratio(fast, slow);
    if (n == 0) {
        throw validation_error(std::string("misaligned grids: ") + what);
    }
    return n;
}

// Switch state for integer step j on a grid with steps_per_cycle steps per
// switching period. Equals frac(t*f_sw) < duty under exact arithmetic but
// avoids boundary misclassification from accumulated rounding in t*f_sw.
SwitchState grid_switch_state(std::int64_t j, std::int64_t steps_per_cycle,
                              double duty) {
    const double pos = static_cast<double>(j % steps_per_cycle);
    return pos < duty * static_cast<double>(steps_per_cycle)
               ? SwitchState::on
               : SwitchState::off;
}

SwitchState grid_switch_state_mid(std::int64_t j, std::int64_t steps_per_cycle,
                                  double duty) {
    const double pos = static_cast<double>(j % steps_per_cycle) + 0.5;
    return pos < duty * static_cast<double>(steps_per_cycle)
               ? SwitchState::on
               : SwitchState::off;
}

struct SwitchedMatrices {
    StateMatrices on;
    StateMatrices off;

    explicit SwitchedMatrices(const CircuitParams& p)
        : on(build_matrices(p, SwitchState::on)),
          off(build_matrices(p, SwitchState::off)) {}

    const StateMatrices& pick(SwitchState s) const {
        return s == SwitchState::on ? on : off;
    }
};

StateVector rk4_step(const SwitchedMatrices& m, const StateVector& x,
                     SwitchState s0, SwitchState s_mid, SwitchState s1,
                     double h) {
    const StateVector k1 = derivative(m.pick(s0), x, s0);
    const StateVector x2{x.i_L + 0.5 * h * k1.i_L, x.v_o + 0.5 * h * k1.v_o};
    const StateVector k2 = derivative(m.pick(s_mid), x2, s_mid);
    const StateVector x3{x.i_L + 0.5 * h * k2.i_L, x.v_o + 0.5 * h * k2.v_o};
    const StateVector k3 = derivative(m.pick(s_mid), x3, s_mid);
    const StateVector x4{x.i_L + h * k3.i_L, x.v_o + h * k3.v_o};
    const StateVector k4 = derivative(m.pick(s1), x4, s1);
    return {x.i_L + h / 6.0 * (k1.i_L + 2.0 * k2.i_L + 2.0 * k3.i_L + k4.i_L),
            x.v_o + h / 6.0 * (k1.v_o + 2.0 * k2.v_o + 2.0 * k3.v_o + k4.v_o)};
}

// One switching cycle on an integration grid with spc steps per cycle.
StateVector integrate_cycle(const SwitchedMatrices& m, StateVector x,
                            std::int64_t spc, double duty, double h,
                            TruthSolver solver) {
    for (std::int64_t j = 0; j < spc; ++j) {
        if (solver == TruthSolver::euler) {
            x = euler_step(m.pick(grid_switch_state(j, spc, duty)), x,
                           grid_switch_state(j, spc, duty), h);
        } else {
            x = rk4_step(m, x, grid_switch_state(j, spc, duty),
                         grid_switch_state_mid(j, spc, duty),
                         grid_switch_state(j + 1, spc, duty), h);
        }
    }
    return x;
}

}  // namespace

void SimConfig::validate() const {
    if (!(duty > 0.0 && duty < 1.0)) {
        throw validation_error("duty must lie in (0, 1)");
    }
    if (!(window_length > 0.0)) {
        throw validation_error("window_length must be > 0");
    }
    if (!(load_pre > 0.0) || !(load_post > 0.0)) {
        throw validation_error("load resistances must be > 0");
    }
    if (step_time < 0.0 || step_time > window_length) {
        throw validation_error("step_time must lie inside the window");
    }
    if (adc_bits < 0 || adc_bits > 30) {
        throw validation_error("adc_bits out of range");
    }
    if (!(i_range > 0.0) || !(v_range > 0.0)) {
        throw validation_error("ADC ranges must be > 0");
    }
    if (noise_multiple < 0.0) {
        throw validation_error("noise_multiple must be >= 0");
    }
    if (!(f_truth >= f_sa)) {
        throw validation_error("f_truth must be >= f_sa");
    }
    require_ratio(f_truth, f_p, "f_truth must be a multiple of f_p");
    require_ratio(f_p, f_sa, "f_p must be a multiple of f_sa");
    require_ratio(f_p, f_sw, "f_p must be a multiple of f_sw");
    require_ratio(f_truth, f_sw, "f_truth must be a multiple of f_sw");
    require_ratio(f_truth, f_sa, "f_truth must be a multiple of f_sa");
}

double SimConfig::i_res() const {
    return adc_bits > 0 ? i_range / std::pow(2.0, adc_bits) : 0.0;
}

double SimConfig::v_res() const {
    return adc_bits > 0 ? v_range / std::pow(2.0, adc_bits) : 0.0;
}

SwitchState pwm_switch_state(double t, double f_sw, double duty) {
    if (t < 0.0) {
        throw validation_error("pwm_switch_state requires t >= 0");
    }
    const double phase = t * f_sw;
    const double frac = phase - std::floor(phase);
    return frac < duty ? SwitchState::on : SwitchState::off;
}

StateVector steady_state_init(const CircuitParams& p, double duty,
                              double f_sw, double f_int, TruthSolver solver) {
    p.validate();
    if (!(duty > 0.0 && duty < 1.0)) {
        throw validation_error("duty must lie in (0, 1)");
    }
    const std::int64_t spc =
        require_ratio(f_int, f_sw, "f_int must be a multiple of f_sw");
    const double h = 1.0 / f_int;
    const SwitchedMatrices m(p);

    StateVector x{p.V_i * duty / p.R, p.V_i * duty};
    constexpr std::int64_t kMaxCycles = 100000;
    for (std::int64_t cycle = 0; cycle < kMaxCycles; ++cycle) {
        const StateVector start = x;
        x = integrate_cycle(m, x, spc, duty, h, solver);
        if (!std::isfinite(x.i_L) || !std::isfinite(x.v_o)) {
            throw numerical_error("steady_state_init: state diverged");
        }
        const double rel = std::max(
            std::abs(x.i_L - start.i_L) / std::max(std::abs(start.i_L), 1e-9),
            std::abs(x.v_o - start.v_o) / std::max(std::abs(start.v_o), 1e-9));
        if (rel < 1e-9) {
            return x;
        }
    }
    throw numerical_error(
        "steady_state_init: no periodic steady state after 1e5 cycles");
}

double quantize(double value, double resolution) {
    if (resolution <= 0.0) return value;
    const double steps = std::floor(std::abs(value) / resolution + 0.5);
    return std::copysign(steps * resolution, value);
}

StateVector apply_adc(const StateVector& raw, const SimConfig& cfg,
                      std::mt19937_64& rng) {
    StateVector s = raw;
    if (cfg.noise_multiple > 0.0) {
        std::normal_distribution<double> ni(0.0, cfg.noise_multiple * cfg.i_res());
        std::normal_distribution<double> nv(0.0, cfg.noise_multiple * cfg.v_res());
        s.i_L += ni(rng);
        s.v_o += nv(rng);
    }
    s.i_L = quantize(s.i_L, cfg.i_res());
    s.v_o = quantize(s.v_o, cfg.v_res());
    return s;
}

MeasurementWindow simulate_window(const SimConfig& cfg, const CircuitParams& p) {
    cfg.validate();

    CircuitParams p_pre = p;
    p_pre.R = cfg.load_pre;
    CircuitParams p_post = p;
    p_post.R = cfg.load_post;
    p_pre.validate();
    p_post.validate();

    const auto n = static_cast<std::size_t>(
        std::llround(cfg.f_sa * cfg.window_length));
    const auto m = static_cast<std::size_t>(
        std::llround(cfg.f_p * cfg.window_length));
    if (n == 0 || m == 0) {
        throw validation_error("window too short for the configured rates");
    }

    const std::int64_t spc_truth = exact_ratio(cfg.f_truth, cfg.f_sw);
    const std::int64_t spc_p = exact_ratio(cfg.f_p, cfg.f_sw);
    const std::int64_t sample_stride = exact_ratio(cfg.f_truth, cfg.f_sa);
    const std::int64_t truth_steps =
        std::llround(cfg.f_truth * cfg.window_length);
    const std::int64_t step_index = std::llround(cfg.f_truth * cfg.step_time);
    const double h = 1.0 / cfg.f_truth;

    const StateVector x_init =
        steady_state_init(p_pre, cfg.duty, cfg.f_sw, cfg.f_truth,
                          cfg.truth_solver);

    const SwitchedMatrices m_pre(p_pre);
    const SwitchedMatrices m_post(p_post);

    MeasurementWindow w;
    w.meta = cfg;
    w.f_sa = cfg.f_sa;
    w.f_p = cfg.f_p;
    w.n = n;
    w.m = m;
    w.t_sa.reserve(n);
    w.x_sa.reserve(n);

    std::mt19937_64 rng(cfg.seed);

    // Stream the truth integration; only sampled points are kept.
    StateVector x = x_init;
    for (std::int64_t k = 0; k < truth_steps; ++k) {
        if (k % sample_stride == 0) {
            w.t_sa.push_back(static_cast<double>(k / sample_stride) / cfg.f_sa);
            w.x_sa.push_back(apply_adc(x, cfg, rng));
        }
        const SwitchedMatrices& mats = (k < step_index) ? m_pre : m_post;
        if (cfg.truth_solver == TruthSolver::euler) {
            const SwitchState s = grid_switch_state(k, spc_truth, cfg.duty);
            x = euler_step(mats.pick(s), x, s, h);
        } else {
            x = rk4_step(mats, x, grid_switch_state(k, spc_truth, cfg.duty),
                         grid_switch_state_mid(k, spc_truth, cfg.duty),
                         grid_switch_state(k + 1, spc_truth, cfg.duty), h);
        }
        if (!std::isfinite(x.i_L) || !std::isfinite(x.v_o)) {
            throw numerical_error("simulate_window: truth trajectory diverged");
        }
    }
    if (w.x_sa.size() != n) {
        throw numerical_error("simulate_window: sample count mismatch");
    }

    w.s_trace.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        w.s_trace[j] =
            grid_switch_state(static_cast<std::int64_t>(j), spc_p, cfg.duty);
    }
    w.x0 = w.x_sa.front();
    return w;
}

CircuitParams table_params() {
    CircuitParams p;
    p.L = 1.4e-3;
    p.C = 140e-6;
    p.R = 2.88;  // full-load value; cases override per load step
    p.R_C = 0.3;
    p.R_L = 0.1;
    p.R_dson = 0.04;
    p.V_F = 1.0;
    p.V_i = 48.0;
    return p;
}

SimConfig case_catalog(int id) {
    constexpr double kOutputVolt = 24.0;
    constexpr double kMaxPower = 200.0;
    const auto load_at = [](double power_fraction) {
        return kOutputVolt * kOutputVolt / (power_fraction * kMaxPower);
    };

    SimConfig cfg;
    cfg.load_pre = load_at(0.25);
    switch (id) {
        case 1: cfg.load_post = load_at(1.00); break;
        case 2: cfg.load_post = load_at(0.75); break;
        case 3: cfg.load_post = load_at(0.50); break;
        case 4: cfg.load_post = load_at(1.00); cfg.noise_multiple = 5.0; break;
        case 5: cfg.load_post = load_at(1.00); cfg.noise_multiple = 25.0; break;
        case 6: cfg.load_post = load_at(1.00); cfg.noise_multiple = 50.0; break;
        default:
            throw validation_error("unknown case id " + std::to_string(id));
    }
    return cfg;
}

CircuitParams case_actual_params(int id) {
    CircuitParams p = table_params();
    p.R = case_catalog(id).load_post;
    return p;
}

// --- serialization -----------------------------------------------------------

namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json config_to_json(const SimConfig& c) {
    return json{{"f_sw", c.f_sw},
                {"f_sa", c.f_sa},
                {"f_p", c.f_p},
                {"f_truth", c.f_truth},
                {"duty", c.duty},
                {"window_length", c.window_length},
                {"load_pre", c.load_pre},
                {"load_post", c.load_post},
                {"step_time", c.step_time},
                {"adc_bits", c.adc_bits},
                {"i_range", c.i_range},
                {"v_range", c.v_range},
                {"noise_multiple", c.noise_multiple},
                {"seed", c.seed},
                {"truth_solver",
                 c.truth_solver == TruthSolver::euler ? "euler" : "rk4"}};
}

SimConfig config_from_json(const json& j) {
    SimConfig c;
    c.f_sw = j.at("f_sw").get<double>();
    c.f_sa = j.at("f_sa").get<double>();
    c.f_p = j.at("f_p").get<double>();
    c.f_truth = j.at("f_truth").get<double>();
    c.duty = j.at("duty").get<double>();
    c.window_length = j.at("window_length").get<double>();
    c.load_pre = j.at("load_pre").get<double>();
    c.load_post = j.at("load_post").get<double>();
    c.step_time = j.at("step_time").get<double>();
    c.adc_bits = j.at("adc_bits").get<int>();
    c.i_range = j.at("i_range").get<double>();
    c.v_range = j.at("v_range").get<double>();
    c.noise_multiple = j.at("noise_multiple").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const std::string solver = j.at("truth_solver").get<std::string>();
    if (solver == "euler") {
        c.truth_solver = TruthSolver::euler;
    } else if (solver == "rk4") {
        c.truth_solver = TruthSolver::rk4;
    } else {
        throw validation_error("unknown truth_solver: " + solver);
    }
    return c;
}

}  // namespace

void write_window(const MeasurementWindow& w, const std::filesystem::path& stem) {
    {
        std::ofstream out(stem.string() + ".csv");
        if (!out) throw validation_error("cannot write " + stem.string() + ".csv");
        out << "t_s,i_L_A,v_o_V\n";
        for (std::size_t j = 0; j < w.n; ++j) {
            out << fmt(w.t_sa[j]) << ',' << fmt(w.x_sa[j].i_L) << ','
                << fmt(w.x_sa[j].v_o) << '\n';
        }
    }
    {
        std::ofstream out(stem.string() + "_switch.csv");
        out << "t_s,s\n";
        for (std::size_t j = 0; j < w.m; ++j) {
            out << fmt(static_cast<double>(j) / w.f_p) << ','
                << (w.s_trace[j] == SwitchState::on ? 1 : 0) << '\n';
        }
    }
    {
        std::ofstream out(stem.string() + ".json");
        out << config_to_json(w.meta).dump(2) << '\n';
    }
}

MeasurementWindow read_window(const std::filesystem::path& csv_path) {
    std::filesystem::path stem = csv_path;
    stem.replace_extension();

    MeasurementWindow w;
    {
        std::ifstream in(stem.string() + ".json");
        if (!in) throw validation_error("missing sidecar " + stem.string() + ".json");
        json j;
        in >> j;
        w.meta = config_from_json(j);
    }
    {
        std::ifstream in(csv_path);
        if (!in) throw validation_error("cannot read " + csv_path.string());
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            double t, i, v;
            if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &t, &i, &v) != 3) {
                throw validation_error("malformed window row: " + line);
            }
            w.t_sa.push_back(t);
            w.x_sa.push_back({i, v});
        }
    }
    {
        std::ifstream in(stem.string() + "_switch.csv");
        if (!in) {
            throw validation_error("missing switch trace " + stem.string() +
                                   "_switch.csv");
        }
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            double t;
            int s;
            if (std::sscanf(line.c_str(), "%lf,%d", &t, &s) != 2) {
                throw validation_error("malformed switch row: " + line);
            }
            w.s_trace.push_back(s != 0 ? SwitchState::on : SwitchState::off);
        }
    }
    w.n = w.x_sa.size();
    w.m = w.s_trace.size();
    w.f_sa = w.meta.f_sa;
    w.f_p = w.meta.f_p;
    if (w.n == 0 || w.m == 0 || w.m % w.n != 0) {
        throw validation_error("window files disagree: M must be a multiple of N");
    }
    w.x0 = w.x_sa.front();
    return w;
}

}  // namespace buckid
