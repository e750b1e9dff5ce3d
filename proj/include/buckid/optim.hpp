#pragma once

// First-order optimizers over flat weight vectors: Adam with bias
// correction, and limited-memory BFGS (two-loop recursion, Armijo
// backtracking line search).

#include <deque>
#include <functional>
#include <vector>

#include "buckid/errors.hpp"

namespace buckid {

using LossFn = std::function<double(const std::vector<double>&)>;
using GradFn = std::function<std::vector<double>(const std::vector<double>&)>;

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t dim, double b1 = 0.9, double b2 = 0.999,
                       double e = 1e-8)
        : m(dim, 0.0), v(dim, 0.0), beta1(b1), beta2(b2), eps(e) {}
};

/// One bias-corrected Adam update of x in place.
void adam_step(AdamState& state, std::vector<double>& x,
               const std::vector<double>& grad, double lr);

struct LbfgsState {
    std::size_t history = 10;
    std::deque<std::pair<std::vector<double>, std::vector<double>>> pairs;  // (s, y)

    explicit LbfgsState(std::size_t history_depth = 10)
        : history(history_depth) {}

    void clear() { pairs.clear(); }
};

struct LbfgsReport {
    double f_before = 0.0;
    double f_after = 0.0;
    double step_length = 0.0;   // accepted alpha (0 when stalled)
    double g_dot_d = 0.0;       // directional derivative at the start point
    int trials = 0;             // line-search evaluations
    bool stalled = false;       // no Armijo point within the trial budget
};

/// One quasi-Newton update of x in place. Direction comes from the two-loop
/// recursion over stored curvature pairs (gamma-scaled initial Hessian);
/// with an empty history the first trial point is x - lr * grad. The line
/// search backtracks from alpha = lr by halving, Armijo c1 = 1e-4, at most
/// 20 trials; on failure x is left unchanged and the report is marked
/// stalled. Pairs with non-positive curvature are discarded.
LbfgsReport lbfgs_step(LbfgsState& state, std::vector<double>& x,
                       const LossFn& loss, const GradFn& grad, double lr);

}  // namespace buckid
