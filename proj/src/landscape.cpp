#include "buckid/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace buckid {

namespace {

constexpr double kSentinelLoss = 1e9;

double loss_at_point(const MeasurementWindow& window, const CircuitParams& theta,
                     const LossWeights& w) {
    const auto pred =
        predict_trajectory(theta, window.x0, window.s_trace, window.dt_p());
    return training_loss(pred, window, w);
}

// E as a function of normalized coordinates n_k = theta_k / actual_k.
double loss_normalized(const MeasurementWindow& window, const CircuitParams& actual,
                       const ParamArray& n, const LossWeights& w) {
    const ParamArray act = actual.estimated();
    ParamArray theta{};
    for (std::size_t k = 0; k < kNumParams; ++k) theta[k] = n[k] * act[k];
    return loss_at_point(window, CircuitParams::from_estimated(theta, actual.V_i), w);
}

}  // namespace

void SweepSpec::validate() const {
    if (param_index >= kNumParams) {
        throw validation_error("sweep parameter index out of range");
    }
    if (!(lo_pct > 0.0) || !(hi_pct > lo_pct)) {
        throw validation_error("sweep range must satisfy 0 < lo < hi");
    }
    if (count < 3) {
        throw validation_error("sweep needs at least 3 grid points");
    }
    base.validate();
}

double SweepResult::peak() const {
    return loss.empty() ? 0.0 : *std::max_element(loss.begin(), loss.end());
}

double SweepResult::min_loss() const {
    return loss.empty() ? 0.0 : *std::min_element(loss.begin(), loss.end());
}

double SweepResult::argmin_pct() const {
    if (loss.empty()) return 0.0;
    const auto it = std::min_element(loss.begin(), loss.end());
    return grid_pct[static_cast<std::size_t>(it - loss.begin())];
}

SweepResult sweep_loss(const MeasurementWindow& window, const SweepSpec& spec) {
    spec.validate();
    SweepResult res;
    res.param_index = spec.param_index;
    res.grid_pct.resize(spec.count);
    res.loss.resize(spec.count);
    res.diverged.assign(spec.count, 0);

    const ParamArray actual = spec.base.estimated();
    for (int i = 0; i < spec.count; ++i) {
        const double pct =
            spec.lo_pct + (spec.hi_pct - spec.lo_pct) * i / (spec.count - 1);
        res.grid_pct[i] = pct;
        ParamArray theta = actual;
        theta[spec.param_index] = pct / 100.0 * actual[spec.param_index];
        try {
            res.loss[i] = loss_at_point(
                window, CircuitParams::from_estimated(theta, spec.base.V_i),
                spec.weights);
        } catch (const divergence_error&) {
            res.loss[i] = kSentinelLoss;
            res.diverged[i] = 1;
        }
    }
    return res;
}

namespace {

void check_fd_step(double h) {
    if (h < 1e3 * std::numeric_limits<double>::epsilon()) {
        throw validation_error("finite-difference step underflows");
    }
}

ParamArray normalized_point(const CircuitParams& point,
                            const CircuitParams& actual) {
    point.validate();
    actual.validate();
    const ParamArray pt = point.estimated();
    const ParamArray act = actual.estimated();
    ParamArray n{};
    for (std::size_t k = 0; k < kNumParams; ++k) n[k] = pt[k] / act[k];
    return n;
}

}  // namespace

std::array<double, kNumParams> fd_gradient_fn(const NormalizedLossFn& eval,
                                              const ParamArray& n, double h) {
    check_fd_step(h);
    std::array<double, kNumParams> g{};
    for (std::size_t k = 0; k < kNumParams; ++k) {
        const double step = h * n[k];
        ParamArray np = n, nm = n;
        np[k] += step;
        nm[k] -= step;
        g[k] = (eval(np) - eval(nm)) / (2.0 * step);
    }
    return g;
}

std::vector<double> fd_hessian_fn(const NormalizedLossFn& eval,
                                  const ParamArray& n, double h) {
    check_fd_step(h);
    std::vector<double> hess(kNumParams * kNumParams, 0.0);
    const double e0 = eval(n);
    for (std::size_t k = 0; k < kNumParams; ++k) {
        const double hk = h * n[k];
        ParamArray np = n, nm = n;
        np[k] += hk;
        nm[k] -= hk;
        hess[k * kNumParams + k] = (eval(np) - 2.0 * e0 + eval(nm)) / (hk * hk);
        for (std::size_t l = k + 1; l < kNumParams; ++l) {
            const double hl = h * n[l];
            ParamArray pp = n, pm = n, mp = n, mm = n;
            pp[k] += hk; pp[l] += hl;
            pm[k] += hk; pm[l] -= hl;
            mp[k] -= hk; mp[l] += hl;
            mm[k] -= hk; mm[l] -= hl;
            const double v =
                (eval(pp) - eval(pm) - eval(mp) + eval(mm)) / (4.0 * hk * hl);
            hess[k * kNumParams + l] = v;
            hess[l * kNumParams + k] = v;
        }
    }
    // Symmetrize: (H + H^T) / 2 (already symmetric by construction, kept for
    // the contract).
    for (std::size_t k = 0; k < kNumParams; ++k) {
        for (std::size_t l = k + 1; l < kNumParams; ++l) {
            const double v =
                0.5 * (hess[k * kNumParams + l] + hess[l * kNumParams + k]);
            hess[k * kNumParams + l] = v;
            hess[l * kNumParams + k] = v;
        }
    }
    return hess;
}

std::array<double, kNumParams> fd_gradient(const MeasurementWindow& window,
                                           const CircuitParams& point,
                                           const CircuitParams& actual,
                                           const LossWeights& w, double h) {
    const ParamArray n = normalized_point(point, actual);
    return fd_gradient_fn(
        [&](const ParamArray& coords) {
            return loss_normalized(window, actual, coords, w);
        },
        n, h);
}

std::vector<double> fd_hessian(const MeasurementWindow& window,
                               const CircuitParams& point,
                               const CircuitParams& actual,
                               const LossWeights& w, double h) {
    const ParamArray n = normalized_point(point, actual);
    return fd_hessian_fn(
        [&](const ParamArray& coords) {
            return loss_normalized(window, actual, coords, w);
        },
        n, h);
}

EigResult eig_symmetric(const std::vector<double>& h, std::size_t n) {
    if (n == 0 || h.size() != n * n) {
        throw validation_error("eig_symmetric: bad dimensions");
    }
    double max_abs = 0.0;
    for (double v : h) max_abs = std::max(max_abs, std::abs(v));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(h[i * n + j] - h[j * n + i]) > 1e-8 * std::max(max_abs, 1e-300)) {
                throw validation_error("eig_symmetric: matrix is not symmetric");
            }
        }
    }

    std::vector<double> a(h);
    // Enforce exact symmetry before rotating.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

    double norm = 0.0;
    for (double x : a) norm += x * x;
    norm = std::sqrt(norm);
    const double target = 1e-12 * norm;

    const auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) s += a[i * n + j] * a[i * n + j];
            }
        }
        return std::sqrt(s);
    };

    constexpr int kMaxSweeps = 100;
    for (int sweep = 0; sweep < kMaxSweeps && off_norm() > target; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = a[p * n + p], aqq = a[q * n + q];
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (r != p && r != q) {
                        const double arp = a[r * n + p], arq = a[r * n + q];
                        a[r * n + p] = arp - s * (arq + tau * arp);
                        a[p * n + r] = a[r * n + p];
                        a[r * n + q] = arq + s * (arp - tau * arq);
                        a[q * n + r] = a[r * n + q];
                    }
                    const double vrp = v[r * n + p], vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + tau * vrp);
                    v[r * n + q] = vrq + s * (vrp - tau * vrq);
                }
            }
        }
    }
    if (norm > 0.0 && off_norm() > target) {
        throw numerical_error("eig_symmetric: Jacobi sweeps did not converge");
    }

    // Sort eigenvalues descending, carrying eigenvector columns along.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return a[x * n + x] > a[y * n + y];
    });

    EigResult res;
    res.values.resize(n);
    res.vectors.resize(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        res.values[j] = a[order[j] * n + order[j]];
        for (std::size_t i = 0; i < n; ++i) {
            res.vectors[i * n + j] = v[i * n + order[j]];
        }
    }
    return res;
}

double condition_number(const std::vector<double>& eigenvalues) {
    if (eigenvalues.empty()) {
        throw validation_error("condition_number: empty spectrum");
    }
    double max_abs = 0.0;
    for (double v : eigenvalues) max_abs = std::max(max_abs, std::abs(v));
    if (max_abs == 0.0) {
        throw numerical_error("condition_number: all eigenvalues are zero");
    }
    double min_abs = std::numeric_limits<double>::infinity();
    std::size_t kept = 0;
    for (double v : eigenvalues) {
        const double a = std::abs(v);
        if (a > 1e-14 * max_abs) {
            min_abs = std::min(min_abs, a);
            ++kept;
        }
    }
    if (kept <= 1) {
        return std::numeric_limits<double>::infinity();
    }
    return max_abs / min_abs;
}

SmoothnessMetrics smoothness_metrics(const std::vector<double>& grid_pct,
                                     const std::vector<double>& loss) {
    if (grid_pct.size() != loss.size() || loss.size() < 3) {
        throw validation_error("smoothness_metrics needs >= 3 grid points");
    }
    SmoothnessMetrics m;
    double tv = 0.0;
    for (std::size_t i = 1; i < loss.size(); ++i) {
        tv += std::abs(loss[i] - loss[i - 1]);
    }
    const double peak = *std::max_element(loss.begin(), loss.end());
    m.total_variation = peak > 0.0 ? tv / peak : 0.0;
    for (std::size_t i = 1; i + 1 < loss.size(); ++i) {
        if (loss[i] < loss[i - 1] && loss[i] < loss[i + 1]) ++m.local_minima;
    }
    return m;
}

const char* to_string(ParamClass c) {
    switch (c) {
        case ParamClass::reliable: return "reliable";
        case ParamClass::condition_dependent: return "condition-dependent";
        case ParamClass::unreliable: return "unreliable";
    }
    return "unknown";
}

CaseLandscape analyze_case(const MeasurementWindow& window,
                           const CircuitParams& actual, int case_id,
                           const LandscapeConfig& cfg) {
    actual.validate();
    const LossWeights w = LossWeights::normalized(window);

    CaseLandscape out;
    out.case_id = case_id;
    for (std::size_t k = 0; k < kNumParams; ++k) {
        SweepSpec spec;
        spec.param_index = k;
        spec.base = actual;
        spec.weights = w;
        spec.lo_pct = cfg.wide_lo;
        spec.hi_pct = cfg.wide_hi;
        spec.count = cfg.wide_count;
        out.wide[k] = sweep_loss(window, spec);
        out.wide_smoothness[k] =
            smoothness_metrics(out.wide[k].grid_pct, out.wide[k].loss);

        spec.lo_pct = cfg.fine_lo;
        spec.hi_pct = cfg.fine_hi;
        spec.count = cfg.fine_count;
        out.fine[k] = sweep_loss(window, spec);
        out.fine_smoothness[k] =
            smoothness_metrics(out.fine[k].grid_pct, out.fine[k].loss);
    }

    const auto probe_at = [&](const std::string& label, std::size_t index,
                              double pct) {
        ParamArray n{};
        n.fill(100.0);
        CircuitParams point = actual;
        if (index < kNumParams) {
            n[index] = pct;
            ParamArray theta = actual.estimated();
            theta[index] *= pct / 100.0;
            point = CircuitParams::from_estimated(theta, actual.V_i);
        }
        ProbeReport probe;
        probe.label = label;
        probe.point_pct = n;
        probe.hessian = fd_hessian(window, point, actual, w, cfg.fd_step);
        EigResult eig = eig_symmetric(probe.hessian, kNumParams);
        probe.eigenvalues = eig.values;
        probe.condition_number = condition_number(probe.eigenvalues);
        out.probes.push_back(std::move(probe));
    };

    probe_at("actual", kNumParams, 100.0);
    for (std::size_t k : {kL, kC, kR, kRc}) {
        probe_at(std::string(kParamNames[k]) + "-" +
                     std::to_string(static_cast<int>(cfg.probe_delta_pct)) + "%",
                 k, 100.0 - cfg.probe_delta_pct);
        probe_at(std::string(kParamNames[k]) + "+" +
                     std::to_string(static_cast<int>(cfg.probe_delta_pct)) + "%",
                 k, 100.0 + cfg.probe_delta_pct);
    }
    return out;
}

std::array<ParamClass, kNumParams> classify(const std::vector<CaseLandscape>& cases,
                                            const ClassifyThresholds& th) {
    if (cases.empty()) {
        throw validation_error("classify: no analyzed cases");
    }
    std::array<ParamClass, kNumParams> classes{};
    for (std::size_t k = 0; k < kNumParams; ++k) {
        bool reliable_all = true;
        bool unreliable_all = true;
        for (const CaseLandscape& c : cases) {
            double max_peak = 0.0;
            for (std::size_t j = 0; j < kNumParams; ++j) {
                max_peak = std::max(max_peak, c.wide[j].peak());
            }
            const double peak = c.wide[k].peak();
            const int fine_minima = c.fine_smoothness[k].local_minima;
            const double argmin_err = std::abs(c.wide[k].argmin_pct() - 100.0);

            const bool reliable_here = peak >= max_peak / th.magnitude_ratio &&
                                       fine_minima <= th.reliable_minima_max;
            const bool unreliable_here = argmin_err > th.argmin_distance_pct ||
                                         fine_minima >= th.unreliable_minima_min;
            reliable_all = reliable_all && reliable_here;
            unreliable_all = unreliable_all && unreliable_here;
        }
        classes[k] = reliable_all ? ParamClass::reliable
                     : unreliable_all ? ParamClass::unreliable
                                      : ParamClass::condition_dependent;
    }
    return classes;
}

void write_sweeps_csv(const std::array<SweepResult, kNumParams>& sweeps,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write " + path.string());
    out << "param,grid_pct,loss\n";
    char buf[64];
    for (const SweepResult& s : sweeps) {
        for (std::size_t i = 0; i < s.grid_pct.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g", s.grid_pct[i], s.loss[i]);
            out << kParamNames[s.param_index] << ',' << buf << '\n';
        }
    }
}

std::string probes_to_json(const std::vector<ProbeReport>& probes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ProbeReport& p : probes) {
        nlohmann::json j;
        j["label"] = p.label;
        j["point_pct"] = p.point_pct;
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < kNumParams; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t c = 0; c < kNumParams; ++c) {
                row.push_back(p.hessian[i * kNumParams + c]);
            }
            rows.push_back(row);
        }
        j["hessian"] = rows;
        j["eigenvalues"] = p.eigenvalues;
        if (std::isinf(p.condition_number)) {
            j["condition_number"] = "inf";
        } else {
            j["condition_number"] = p.condition_number;
        }
        arr.push_back(j);
    }
    return arr.dump(2);
}

std::string classes_to_json(const std::array<ParamClass, kNumParams>& classes) {
    nlohmann::json j;
    for (std::size_t k = 0; k < kNumParams; ++k) {
        j[kParamNames[k]] = to_string(classes[k]);
    }
    return j.dump(2);
}

}  // namespace buckid
