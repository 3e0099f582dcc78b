#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "optbench/autograd.hpp"

namespace optbench {

/// Builds a scalar loss on the given tape. Must be deterministic: it is
/// evaluated repeatedly with perturbed parameters.
using ScalarFunction = std::function<Var(Tape&)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// 0 checks every coordinate; otherwise the k coordinates with the largest
    /// analytic gradient magnitude in each tensor.
    std::size_t coords_per_tensor = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst;  // "<param>[<index>]: analytic=..., numeric=..."
};

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
double relative_error(double analytic, double numeric) noexcept;

/// Compares tape gradients with central differences (f(x+h) - f(x-h)) / 2h.
/// Parameter values and gradients are restored afterwards.
GradCheckReport grad_check(const ScalarFunction& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options = {});

/// Single-input form: f receives the tape and x registered as a leaf.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step = 1e-5);

}  // namespace optbench
