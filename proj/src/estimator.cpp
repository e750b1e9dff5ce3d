#include "buckid/estimator.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "buckid/optim.hpp"

namespace buckid {

namespace {

constexpr double kDivergenceLimit = 1e6;
constexpr double kDivergedLoss = 1e9;

bool out_of_bounds(const StateVector& x) {
    return !std::isfinite(x.i_L) || !std::isfinite(x.v_o) ||
           std::abs(x.i_L) > kDivergenceLimit || std::abs(x.v_o) > kDivergenceLimit;
}

std::size_t loss_stride(const MeasurementWindow& w) {
    if (w.n == 0 || w.m % w.n != 0) {
        throw validation_error("prediction size must be a multiple of sample size");
    }
    return w.m / w.n;
}

}  // namespace

LossWeights LossWeights::normalized(const MeasurementWindow& w) {
    double i_max = 0.0, v_max = 0.0;
    for (const StateVector& x : w.x_sa) {
        i_max = std::max(i_max, std::abs(x.i_L));
        v_max = std::max(v_max, std::abs(x.v_o));
    }
    LossWeights lw;
    lw.w_i = i_max > 0.0 ? 1.0 / (i_max * i_max) : 1.0;
    lw.w_v = v_max > 0.0 ? 1.0 / (v_max * v_max) : 1.0;
    return lw;
}

void TrainConfig::validate() const {
    if (!(lr_adam > 0.0) || !(lr_lbfgs > 0.0)) {
        throw validation_error("learning rates must be > 0");
    }
    if (max_epochs_adam < 1 || max_epochs_lbfgs < 0) {
        throw validation_error("epoch limits out of range");
    }
    if (!(tolerance > 0.0)) {
        throw validation_error("tolerance must be > 0");
    }
    if (lbfgs_history < 1) {
        throw validation_error("lbfgs_history must be >= 1");
    }
}

LossWeights TrainConfig::weights_for(const MeasurementWindow& w) const {
    switch (weight_mode) {
        case WeightMode::normalized: return LossWeights::normalized(w);
        case WeightMode::unit: return LossWeights::unit();
        case WeightMode::custom: return custom_weights;
    }
    return LossWeights::unit();
}

std::vector<StateVector> predict_trajectory(const CircuitParams& p,
                                            const StateVector& x0,
                                            const std::vector<SwitchState>& s_trace,
                                            double dt_p) {
    const std::size_t m = s_trace.size();
    if (m == 0) throw validation_error("empty switch trace");
    const StateMatrices mat_on = build_matrices(p, SwitchState::on);
    const StateMatrices mat_off = build_matrices(p, SwitchState::off);

    std::vector<StateVector> states(m);
    states[0] = x0;
    if (out_of_bounds(x0)) throw divergence_error("initial state out of bounds");
    for (std::size_t j = 1; j < m; ++j) {
        const SwitchState s = s_trace[j - 1];
        const StateMatrices& mat = (s == SwitchState::on) ? mat_on : mat_off;
        states[j] = euler_step(mat, states[j - 1], s, dt_p);
        if (out_of_bounds(states[j])) {
            throw divergence_error("prediction diverged at step " + std::to_string(j));
        }
    }
    return states;
}

SensitivityTrajectory predict_with_sensitivity(const CircuitParams& p,
                                               const StateVector& x0,
                                               const std::vector<SwitchState>& s_trace,
                                               double dt_p) {
    const std::size_t m = s_trace.size();
    if (m == 0) throw validation_error("empty switch trace");
    const StateMatrices mat_on = build_matrices(p, SwitchState::on);
    const StateMatrices mat_off = build_matrices(p, SwitchState::off);
    const auto jac_on = matrix_param_jacobians(p, SwitchState::on);
    const auto jac_off = matrix_param_jacobians(p, SwitchState::off);

    SensitivityTrajectory out;
    out.states.resize(m);
    out.tangents.assign(m, {});
    out.states[0] = x0;  // x0 is measured data: all tangents start at zero
    if (out_of_bounds(x0)) throw divergence_error("initial state out of bounds");

    for (std::size_t j = 1; j < m; ++j) {
        const SwitchState s = s_trace[j - 1];
        const bool on = s == SwitchState::on;
        const StateMatrices& mat = on ? mat_on : mat_off;
        const auto& jac = on ? jac_on : jac_off;
        const double u_on = on ? 1.0 : 0.0;
        const double u_off = 1.0 - u_on;
        const StateVector& x = out.states[j - 1];

        out.states[j] = euler_step(mat, x, s, dt_p);

        const auto& t_prev = out.tangents[j - 1];
        auto& t_next = out.tangents[j];
        for (std::size_t k = 0; k < kNumParams; ++k) {
            const StateMatrices& dm = jac[k];
            const double di =
                mat.a11 * t_prev[k].i_L + mat.a12 * t_prev[k].v_o +
                dm.a11 * x.i_L + dm.a12 * x.v_o + dm.b11 * u_on + dm.b12 * u_off;
            const double dv =
                mat.a21 * t_prev[k].i_L + mat.a22 * t_prev[k].v_o +
                dm.a21 * x.i_L + dm.a22 * x.v_o + dm.b21 * u_on + dm.b22 * u_off;
            t_next[k] = {t_prev[k].i_L + di * dt_p, t_prev[k].v_o + dv * dt_p};
        }
        if (out_of_bounds(out.states[j])) {
            throw divergence_error("prediction diverged at step " + std::to_string(j));
        }
    }
    return out;
}

double training_loss(const std::vector<StateVector>& pred,
                     const MeasurementWindow& window, const LossWeights& w) {
    if (pred.size() != window.m) {
        throw validation_error("prediction length does not match the window");
    }
    const std::size_t stride = loss_stride(window);
    double e = 0.0;
    for (std::size_t j = 0; j < window.n; ++j) {
        const StateVector& xp = pred[j * stride];
        const StateVector& xm = window.x_sa[j];
        const double ri = xp.i_L - xm.i_L;
        const double rv = xp.v_o - xm.v_o;
        e += w.w_i * ri * ri + w.w_v * rv * rv;
    }
    return e / static_cast<double>(window.n);
}

std::vector<double> flatten(const NetworkGradients& g) {
    std::vector<double> v;
    v.reserve(Network::weight_count());
    for (const auto& row : g.w1) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), g.b1.begin(), g.b1.end());
    for (const auto& row : g.w2) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), g.b2.begin(), g.b2.end());
    for (const auto& row : g.w3) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), g.b3.begin(), g.b3.end());
    return v;
}

GradientResult loss_gradient(const Network& net, const MeasurementWindow& window,
                             const LossWeights& w) {
    const std::size_t stride = loss_stride(window);
    const ForwardTrace trace = forward_trace(net, window.x0);
    const CircuitParams theta =
        denormalize(trace.out, net.nominal, net.range_factor);
    const SensitivityTrajectory sens =
        predict_with_sensitivity(theta, window.x0, window.s_trace, window.dt_p());

    GradientResult res;
    const double inv_n = 1.0 / static_cast<double>(window.n);
    for (std::size_t j = 0; j < window.n; ++j) {
        const StateVector& xp = sens.states[j * stride];
        const StateVector& xm = window.x_sa[j];
        const double ri = xp.i_L - xm.i_L;
        const double rv = xp.v_o - xm.v_o;
        res.loss += w.w_i * ri * ri + w.w_v * rv * rv;
        const auto& t = sens.tangents[j * stride];
        for (std::size_t k = 0; k < kNumParams; ++k) {
            res.d_loss_d_theta[k] +=
                2.0 * (w.w_i * ri * t[k].i_L + w.w_v * rv * t[k].v_o);
        }
    }
    res.loss *= inv_n;
    for (double& g : res.d_loss_d_theta) g *= inv_n;

    // Reverse pass: denormalization, sigmoid, then the two tanh stages.
    const ParamArray nom = net.nominal.estimated();
    std::array<double, kOutputDim> delta3{};
    for (int k = 0; k < kOutputDim; ++k) {
        const double d_out = res.d_loss_d_theta[k] * net.range_factor * nom[k];
        delta3[k] = d_out * trace.out[k] * (1.0 - trace.out[k]);
    }
    for (int k = 0; k < kOutputDim; ++k) {
        for (int j = 0; j < kHiddenDim; ++j) {
            res.weights.w3[k][j] = delta3[k] * trace.z2[j];
        }
        res.weights.b3[k] = delta3[k];
    }
    std::array<double, kHiddenDim> delta2{};
    for (int j = 0; j < kHiddenDim; ++j) {
        double acc = 0.0;
        for (int k = 0; k < kOutputDim; ++k) acc += net.w3[k][j] * delta3[k];
        delta2[j] = acc * (1.0 - trace.z2[j] * trace.z2[j]);
    }
    for (int i = 0; i < kHiddenDim; ++i) {
        for (int j = 0; j < kHiddenDim; ++j) {
            res.weights.w2[i][j] = delta2[i] * trace.z1[j];
        }
        res.weights.b2[i] = delta2[i];
    }
    std::array<double, kHiddenDim> delta1{};
    for (int j = 0; j < kHiddenDim; ++j) {
        double acc = 0.0;
        for (int i = 0; i < kHiddenDim; ++i) acc += net.w2[i][j] * delta2[i];
        delta1[j] = acc * (1.0 - trace.z1[j] * trace.z1[j]);
    }
    for (int i = 0; i < kHiddenDim; ++i) {
        for (int j = 0; j < kInputDim; ++j) {
            res.weights.w1[i][j] = delta1[i] * trace.in[j];
        }
        res.weights.b1[i] = delta1[i];
    }
    return res;
}

namespace {

double loss_at(const Network& net, const MeasurementWindow& window,
               const LossWeights& w) {
    const auto out = forward(net, window.x0);
    const CircuitParams theta = denormalize(out, net.nominal, net.range_factor);
    const auto pred =
        predict_trajectory(theta, window.x0, window.s_trace, window.dt_p());
    return training_loss(pred, window, w);
}

double max_abs_diff(const std::array<double, kOutputDim>& a,
                    const std::array<double, kOutputDim>& b) {
    double d = 0.0;
    for (int k = 0; k < kOutputDim; ++k) d = std::max(d, std::abs(a[k] - b[k]));
    return d;
}

}  // namespace

EstimationResult estimate(const MeasurementWindow& window,
                          const CircuitParams& nominal, const TrainConfig& cfg) {
    cfg.validate();
    nominal.validate();
    const LossWeights w = cfg.weights_for(window);
    loss_stride(window);  // validates alignment up front

    std::mt19937_64 rng(cfg.seed);
    Network net;
    net.nominal = nominal;
    net.input_scale = {window.meta.i_range, window.meta.v_range};
    init_weights(net, rng);

    const auto draw_targets = [&rng, &cfg]() {
        if (cfg.init_targets) {
            for (double t : *cfg.init_targets) {
                if (!(t > 0.0) || !(t < 5.0)) {
                    throw validation_error("init_targets must lie in (0, 5)");
                }
            }
            return *cfg.init_targets;
        }
        std::uniform_real_distribution<double> u(0.5, 1.5);
        std::array<double, kOutputDim> t{};
        for (double& v : t) v = u(rng);
        return t;
    };
    preset_output_bias(net, window.x0, draw_targets());

    EstimationResult res;
    res.seed = cfg.seed;
    const double pct_scale = net.range_factor * 100.0;
    const auto record_theta = [&](const std::array<double, kOutputDim>& out) {
        std::array<double, kNumParams> pct{};
        for (std::size_t k = 0; k < kNumParams; ++k) pct[k] = out[k] * pct_scale;
        res.theta_history_pct.push_back(pct);
    };

    std::vector<double> weights = flatten(net);
    AdamState adam(weights.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    std::array<double, kOutputDim> out_prev = forward(net, window.x0);
    record_theta(out_prev);

    int successful_epochs = 0;
    bool done = false;

    const auto reset_after_divergence = [&]() {
        preset_output_bias(net, window.x0, draw_targets());
        weights = flatten(net);
        adam = AdamState(weights.size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        res.loss_history.push_back(kDivergedLoss);
        ++res.divergence_resets;
    };

    for (int e = 1; e <= cfg.max_epochs_adam && !done; ++e) {
        res.epochs_adam = e;
        try {
            const GradientResult g = loss_gradient(net, window, w);
            res.loss_history.push_back(g.loss);
            adam_step(adam, weights, flatten(g.weights), cfg.lr_adam);
            unflatten(net, weights);
            ++successful_epochs;
        } catch (const divergence_error&) {
            reset_after_divergence();
        }
        const auto out = forward(net, window.x0);
        record_theta(out);
        if (max_abs_diff(out, out_prev) < cfg.tolerance) {
            done = true;
            res.reason = "tolerance";
        }
        out_prev = out;
    }

    if (!done && cfg.max_epochs_lbfgs > 0) {
        Network scratch = net;
        const LossFn loss_fn = [&](const std::vector<double>& v) {
            unflatten(scratch, v);
            try {
                return loss_at(scratch, window, w);
            } catch (const divergence_error&) {
                return kDivergedLoss;
            }
        };
        const GradFn grad_fn = [&](const std::vector<double>& v) {
            unflatten(scratch, v);
            return flatten(loss_gradient(scratch, window, w).weights);
        };

        LbfgsState lbfgs(static_cast<std::size_t>(cfg.lbfgs_history));
        for (int e = 1; e <= cfg.max_epochs_lbfgs && !done; ++e) {
            res.epochs_lbfgs = e;
            bool stalled = false;
            const bool curvature_informed = !lbfgs.pairs.empty();
            try {
                const LbfgsReport rep =
                    lbfgs_step(lbfgs, weights, loss_fn, grad_fn, cfg.lr_lbfgs);
                res.loss_history.push_back(rep.f_before);
                unflatten(net, weights);
                stalled = rep.stalled;
                ++successful_epochs;
            } catch (const divergence_error&) {
                reset_after_divergence();
                lbfgs.clear();
            }
            const auto out = forward(net, window.x0);
            record_theta(out);
            // The bootstrap step before any curvature pair exists has length
            // lr * |g|, which says nothing about convergence; test only for
            // steps taken with the inverse-Hessian estimate in play (or when
            // the line search stalled outright).
            if ((curvature_informed || stalled) &&
                max_abs_diff(out, out_prev) < cfg.tolerance) {
                done = true;
                res.reason = "tolerance";
            }
            out_prev = out;
        }
    }

    if (successful_epochs == 0) {
        throw numerical_error("estimate: every epoch diverged");
    }
    if (!done) res.reason = "max_epoch";
    res.converged = true;

    try {
        res.loss_history.push_back(loss_at(net, window, w));
    } catch (const divergence_error&) {
        res.loss_history.push_back(kDivergedLoss);
    }
    const auto out = forward(net, window.x0);
    res.theta_hat = denormalize(out, nominal, net.range_factor);
    for (std::size_t k = 0; k < kNumParams; ++k) {
        res.theta_hat_pct[k] = out[k] * pct_scale;
    }
    return res;
}

// --- serialization -----------------------------------------------------------

using nlohmann::json;

std::string result_to_json(const EstimationResult& r) {
    json j;
    j["theta_hat"] = {{"L", r.theta_hat.L},         {"C", r.theta_hat.C},
                      {"R", r.theta_hat.R},         {"R_C", r.theta_hat.R_C},
                      {"R_L", r.theta_hat.R_L},     {"R_dson", r.theta_hat.R_dson},
                      {"V_F", r.theta_hat.V_F},     {"V_i", r.theta_hat.V_i}};
    j["theta_hat_pct"] = r.theta_hat_pct;
    j["loss_history"] = r.loss_history;
    j["theta_history_pct"] = r.theta_history_pct;
    j["epochs"] = {{"adam", r.epochs_adam}, {"lbfgs", r.epochs_lbfgs}};
    j["converged"] = r.converged;
    j["reason"] = r.reason;
    j["seed"] = r.seed;
    j["divergence_resets"] = r.divergence_resets;
    return j.dump(2);
}

EstimationResult result_from_json(const std::string& text) {
    const json j = json::parse(text);
    EstimationResult r;
    const json& th = j.at("theta_hat");
    r.theta_hat = {th.at("L").get<double>(),      th.at("C").get<double>(),
                   th.at("R").get<double>(),      th.at("R_C").get<double>(),
                   th.at("R_L").get<double>(),    th.at("R_dson").get<double>(),
                   th.at("V_F").get<double>(),    th.at("V_i").get<double>()};
    r.theta_hat_pct = j.at("theta_hat_pct").get<std::array<double, kNumParams>>();
    r.loss_history = j.at("loss_history").get<std::vector<double>>();
    r.theta_history_pct =
        j.at("theta_history_pct").get<std::vector<std::array<double, kNumParams>>>();
    r.epochs_adam = j.at("epochs").at("adam").get<int>();
    r.epochs_lbfgs = j.at("epochs").at("lbfgs").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.reason = j.at("reason").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.divergence_resets = j.value("divergence_resets", 0);
    return r;
}

}  // namespace buckid
