#include "buckid/optim.hpp"

#include <cmath>

namespace buckid {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void adam_step(AdamState& state, std::vector<double>& x,
               const std::vector<double>& grad, double lr) {
    if (x.size() != state.m.size() || grad.size() != x.size()) {
        throw validation_error("adam_step: dimension mismatch");
    }
    if (!(lr > 0.0)) {
        throw validation_error("adam_step: lr must be > 0");
    }
    state.t += 1;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < x.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        x[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

LbfgsReport lbfgs_step(LbfgsState& state, std::vector<double>& x,
                       const LossFn& loss, const GradFn& grad, double lr) {
    if (!(lr > 0.0)) {
        throw validation_error("lbfgs_step: lr must be > 0");
    }
    const std::size_t dim = x.size();
    const double f0 = loss(x);
    const std::vector<double> g = grad(x);

    // Two-loop recursion; with no pairs this reduces to -g.
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < dim; ++i) d[i] = -g[i];
    const std::size_t k = state.pairs.size();
    if (k > 0) {
        std::vector<double> alpha(k);
        std::vector<double> rho(k);
        for (std::size_t idx = k; idx-- > 0;) {
            const auto& [s, y] = state.pairs[idx];
            rho[idx] = 1.0 / dot(s, y);
            alpha[idx] = rho[idx] * dot(s, d);
            for (std::size_t i = 0; i < dim; ++i) d[i] -= alpha[idx] * y[i];
        }
        const auto& [s_last, y_last] = state.pairs.back();
        const double gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for (std::size_t i = 0; i < dim; ++i) d[i] *= gamma;
        for (std::size_t idx = 0; idx < k; ++idx) {
            const auto& [s, y] = state.pairs[idx];
            const double beta = rho[idx] * dot(y, d);
            for (std::size_t i = 0; i < dim; ++i) d[i] += (alpha[idx] - beta) * s[i];
        }
    }

    LbfgsReport rep;
    rep.f_before = f0;
    rep.g_dot_d = dot(g, d);
    if (!(rep.g_dot_d < 0.0)) {
        // Not a descent direction (stale curvature); restart from steepest descent.
        state.clear();
        for (std::size_t i = 0; i < dim; ++i) d[i] = -g[i];
        rep.g_dot_d = dot(g, d);
    }

    constexpr double kArmijoC1 = 1e-4;
    constexpr int kMaxTrials = 20;
    double alpha = lr;
    std::vector<double> x_trial(dim);
    for (int trial = 0; trial < kMaxTrials; ++trial) {
        for (std::size_t i = 0; i < dim; ++i) x_trial[i] = x[i] + alpha * d[i];
        const double f_trial = loss(x_trial);
        ++rep.trials;
        if (std::isfinite(f_trial) &&
            f_trial <= f0 + kArmijoC1 * alpha * rep.g_dot_d) {
            const std::vector<double> g_new = grad(x_trial);
            std::vector<double> s(dim), y(dim);
            for (std::size_t i = 0; i < dim; ++i) {
                s[i] = x_trial[i] - x[i];
                y[i] = g_new[i] - g[i];
            }
            const double sy = dot(s, y);
            if (sy > 1e-12 * std::sqrt(dot(s, s)) * std::sqrt(dot(y, y))) {
                state.pairs.emplace_back(std::move(s), std::move(y));
                if (state.pairs.size() > state.history) state.pairs.pop_front();
            }
            x = x_trial;
            rep.f_after = f_trial;
            rep.step_length = alpha;
            return rep;
        }
        alpha *= 0.5;
    }

    rep.f_after = f0;
    rep.stalled = true;
    return rep;
}

}  // namespace buckid
