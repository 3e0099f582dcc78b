#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "optbench/autograd.hpp"

namespace optbench {

enum class OptimizerKind { sgd, adam, adabelief, padam };

/// Accepts exactly "sgd", "adam", "adabelief", "padam".
OptimizerKind parse_optimizer(std::string_view name);
std::string_view to_string(OptimizerKind kind);
inline constexpr OptimizerKind kAllOptimizers[] = {OptimizerKind::sgd, OptimizerKind::adam, OptimizerKind::adabelief,
                                                   OptimizerKind::padam};

struct HyperParams {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double momentum = 0.9;  // SGD only
    double padam_p = 0.125;
    /// Decoupled: theta <- theta - lr * weight_decay * theta before the update.
    double weight_decay = 0.0;

    /// Throws ConfigError on any out-of-range value.
    void validate() const;
};

/// Per-parameter moment buffers (flat, parameter-shaped) plus the step count.
/// Only the buffers an optimizer uses are allocated.
struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;      // first moment / velocity
    std::vector<std::vector<double>> v;      // second moment
    std::vector<std::vector<double>> s;      // belief variance (AdaBelief)
    std::vector<std::vector<double>> v_max;  // running max of bias-corrected v (Padam)
};

// Each step function increments state.step once and updates every parameter
// in place from its accumulated grad. A parameter list whose sizes disagree
// with already-allocated buffers raises StateError.

/// m <- momentum*m + g;  theta <- theta - lr*m
void sgd_momentum_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp);
/// Bias-corrected Adam: theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
void adam_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp);
/// AdaBelief: s <- beta2*s + (1-beta2)*(g - m)^2 + eps;  theta <- theta - lr * m_hat / (sqrt(s_hat) + eps)
void adabelief_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp);
/// Padam: v_max <- max(v_max, v_hat);  theta <- theta - lr * m_hat / (v_max^p + eps)
void padam_step(std::span<Parameter> params, OptimizerState& state, const HyperParams& hp);

void clear_grads(std::span<Parameter> params);

class Optimizer {
  public:
    Optimizer(OptimizerKind kind, HyperParams hp);

    void step(std::span<Parameter> params);
    void clear_grads(std::span<Parameter> params) const { optbench::clear_grads(params); }

    OptimizerKind kind() const noexcept { return kind_; }
    const HyperParams& hyper_params() const noexcept { return hp_; }
    const OptimizerState& state() const noexcept { return state_; }

  private:
    OptimizerKind kind_;
    HyperParams hp_;
    OptimizerState state_;
};

}  // namespace optbench
