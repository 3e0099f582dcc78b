#include "optbench/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "optbench/errors.hpp"

namespace optbench {

OptimizerKind parse_optimizer(std::string_view name) {
    for (OptimizerKind k : kAllOptimizers) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected sgd, adam, adabelief or padam)");
}

std::string_view to_string(OptimizerKind kind) {
    switch (kind) {
        case OptimizerKind::sgd: return "sgd";
        case OptimizerKind::adam: return "adam";
        case OptimizerKind::adabelief: return "adabelief";
        case OptimizerKind::padam: return "padam";
    }
    return "unknown";
}

void HyperParams::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("invalid hyperparameter: " + what); };
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be > 0, got " + std::to_string(lr));
    if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1), got " + std::to_string(beta1));
    if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1), got " + std::to_string(beta2));
    if (!(eps > 0.0)) fail("eps must be > 0, got " + std::to_string(eps));
    if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1), got " + std::to_string(momentum));
    if (!(padam_p > 0.0 && padam_p <= 0.5)) fail("padam_p must lie in (0, 0.5], got " + std::to_string(padam_p));
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0, got " + std::to_string(weight_decay));
}

namespace {

void ensure(std::vector<std::vector<double>>& buffers, std::span<Parameter> params) {
    if (buffers.empty()) {
        buffers.reserve(params.size());
        for (const Parameter& p : params) buffers.emplace_back(p.size(), 0.0);
        return;
    }
    if (buffers.size() != params.size()) {
        throw StateError("optimizer state holds " + std::to_string(buffers.size()) + " buffers but got " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (buffers[i].size() != params[i].size()) {
            throw StateError("optimizer state shape mismatch for parameter '" + params[i].name + "'");
        }
    }
}

void check_grads(std::span<Parameter> params) {
    for (const Parameter& p : params) {
        if (p.grad.size() != p.value.size()) {
            throw StateError("gradient of '" + p.name + "' does not match its value shape");
        }
    }
}

void decay(Parameter& p, const HyperParams& hp) {
    if (hp.weight_decay == 0.0) return;
    const double f = hp.lr * hp.weight_decay;
    for (double& w : p.value.data()) w -= f * w;
}

}  // namespace

void sgd_momentum_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp) {
    check_grads(params);
    ensure(state.m, params);
    ++state.step;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params[pi];
        decay(p, hp);
        auto& m = state.m[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = hp.momentum * m[i] + p.grad[i];
            p.value[i] -= hp.lr * m[i];
        }
    }
}

void adam_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp) {
    check_grads(params);
    ensure(state.m, params);
    ensure(state.v, params);
    const auto t = static_cast<double>(++state.step);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params[pi];
        decay(p, hp);
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.value[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.eps);
        }
    }
}

void adabelief_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp) {
    check_grads(params);
    ensure(state.m, params);
    ensure(state.s, params);
    const auto t = static_cast<double>(++state.step);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params[pi];
        decay(p, hp);
        auto& m = state.m[pi];
        auto& s = state.s[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            const double dev = g - m[i];
            s[i] = hp.beta2 * s[i] + (1.0 - hp.beta2) * dev * dev + hp.eps;
            const double m_hat = m[i] / bc1;
            const double s_hat = s[i] / bc2;
            p.value[i] -= hp.lr * m_hat / (std::sqrt(s_hat) + hp.eps);
        }
    }
}

void padam_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp) {
    if (!(hp.padam_p > 0.0 && hp.padam_p <= 0.5)) {
        throw ConfigError("padam_p must lie in (0, 0.5], got " + std::to_string(hp.padam_p));
    }
    check_grads(params);
    ensure(state.m, params);
    ensure(state.v, params);
    ensure(state.v_max, params);
    const auto t = static_cast<double>(++state.step);
    const double bc1 = 1.0 - std::pow(hp.beta1, t);
    const double bc2 = 1.0 - std::pow(hp.beta2, t);
    // pow(x, 0.5) is not guaranteed to round like sqrt(x); p = 1/2 must match AMSGrad exactly.
    const bool half = hp.padam_p == 0.5;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = params[pi];
        decay(p, hp);
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        auto& vmax = state.v_max[pi];
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            vmax[i] = std::max(vmax[i], v_hat);
            const double denom = half ? std::sqrt(vmax[i]) : std::pow(vmax[i], hp.padam_p);
            p.value[i] -= hp.lr * m_hat / (denom + hp.eps);
        }
    }
}

void clear_grads(std::span<Parameter> params) {
    for (Parameter& p : params) p.zero_grad();
}

Optimizer::Optimizer(OptimizerKind kind, HyperParams hp) : kind_(kind), hp_(hp) { hp_.validate(); }

void Optimizer::step(std::span<Parameter> params) {
    switch (kind_) {
        case OptimizerKind::sgd: sgd_momentum_step(params, state_, hp_); break;
        case OptimizerKind::adam: adam_step(params, state_, hp_); break;
        case OptimizerKind::adabelief: adabelief_step(params, state_, hp_); break;
        case OptimizerKind::padam: padam_step(params, state_, hp_); break;
    }
}

}  // namespace optbench
