#include "buckid/network.hpp"

#include <cmath>

namespace buckid {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double y) { return std::log(y / (1.0 - y)); }

}  // namespace

ForwardTrace forward_trace(const Network& net, const StateVector& x0) {
    ForwardTrace t;
    t.in = {x0.i_L / net.input_scale[0], x0.v_o / net.input_scale[1]};
    for (int i = 0; i < kHiddenDim; ++i) {
        double a = net.b1[i];
        for (int j = 0; j < kInputDim; ++j) a += net.w1[i][j] * t.in[j];
        t.z1[i] = std::tanh(a);
    }
    for (int i = 0; i < kHiddenDim; ++i) {
        double a = net.b2[i];
        for (int j = 0; j < kHiddenDim; ++j) a += net.w2[i][j] * t.z1[j];
        t.z2[i] = std::tanh(a);
    }
    for (int i = 0; i < kOutputDim; ++i) {
        double a = net.b3[i];
        for (int j = 0; j < kHiddenDim; ++j) a += net.w3[i][j] * t.z2[j];
        t.out[i] = sigmoid(a);
    }
    return t;
}

std::array<double, kOutputDim> forward(const Network& net, const StateVector& x0) {
    return forward_trace(net, x0).out;
}

CircuitParams denormalize(const std::array<double, kOutputDim>& out,
                          const CircuitParams& nominal, double range_factor) {
    ParamArray theta{};
    const ParamArray nom = nominal.estimated();
    for (std::size_t k = 0; k < kNumParams; ++k) {
        theta[k] = out[k] * range_factor * nom[k];
    }
    return CircuitParams::from_estimated(theta, nominal.V_i);
}

void init_weights(Network& net, std::mt19937_64& rng) {
    const auto fill = [&rng](auto& rows, auto& bias, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& row : rows) {
            for (double& w : row) w = u(rng);
        }
        for (double& b : bias) b = u(rng);
    };
    fill(net.w1, net.b1, kInputDim);
    fill(net.w2, net.b2, kHiddenDim);
    fill(net.w3, net.b3, kHiddenDim);
}

void preset_output_bias(Network& net, const StateVector& x0,
                        const std::array<double, kOutputDim>& target_fraction) {
    const ForwardTrace t = forward_trace(net, x0);
    for (int k = 0; k < kOutputDim; ++k) {
        double pre = 0.0;
        for (int j = 0; j < kHiddenDim; ++j) pre += net.w3[k][j] * t.z2[j];
        net.b3[k] = logit(target_fraction[k] / net.range_factor) - pre;
    }
}

std::vector<double> flatten(const Network& net) {
    std::vector<double> v;
    v.reserve(Network::weight_count());
    for (const auto& row : net.w1) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), net.b1.begin(), net.b1.end());
    for (const auto& row : net.w2) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), net.b2.begin(), net.b2.end());
    for (const auto& row : net.w3) v.insert(v.end(), row.begin(), row.end());
    v.insert(v.end(), net.b3.begin(), net.b3.end());
    return v;
}

void unflatten(Network& net, const std::vector<double>& v) {
    if (v.size() != Network::weight_count()) {
        throw validation_error("weight vector has wrong length");
    }
    std::size_t p = 0;
    for (auto& row : net.w1) {
        for (double& w : row) w = v[p++];
    }
    for (double& b : net.b1) b = v[p++];
    for (auto& row : net.w2) {
        for (double& w : row) w = v[p++];
    }
    for (double& b : net.b2) b = v[p++];
    for (auto& row : net.w3) {
        for (double& w : row) w = v[p++];
    }
    for (double& b : net.b3) b = v[p++];
}

}  // namespace buckid
