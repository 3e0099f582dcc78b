#include "optbench/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

namespace optbench {

double relative_error(double analytic, double numeric) noexcept {
    return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

double evaluate(const ScalarFunction& f) {
    Tape tape;
    return tape.value(f(tape))[0];
}

std::vector<std::size_t> pick_coordinates(const Tensor& analytic, std::size_t k) {
    std::vector<std::size_t> idx(analytic.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k == 0 || k >= idx.size()) return idx;
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double ma = std::abs(analytic[a]), mb = std::abs(analytic[b]);
                          return ma != mb ? ma > mb : a < b;
                      });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
    std::vector<Tensor> saved_grads;
    saved_grads.reserve(params.size());
    for (Parameter* p : params) {
        saved_grads.push_back(p->grad);
        p->zero_grad();
    }
    {
        Tape tape;
        tape.backward(f(tape));
    }
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        analytic.push_back(params[i]->grad);
        params[i]->grad = saved_grads[i];
    }

    GradCheckReport report;
    const double h = options.step;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (std::size_t i : pick_coordinates(analytic[pi], options.coords_per_tensor)) {
            const double original = p.value[i];
            p.value[i] = original + h;
            const double up = evaluate(f);
            p.value[i] = original - h;
            const double down = evaluate(f);
            p.value[i] = original;
            const double numeric = (up - down) / (2.0 * h);
            const double err = relative_error(analytic[pi][i], numeric);
            ++report.coordinates;
            if (err > report.max_rel_error || report.worst.empty()) {
                report.max_rel_error = std::max(report.max_rel_error, err);
                std::ostringstream os;
                os.precision(10);
                os << p.name << '[' << i << "]: analytic=" << analytic[pi][i] << ", numeric=" << numeric;
                report.worst = os.str();
            }
        }
    }
    return report;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double step) {
    Parameter p("x", x);
    Parameter* ptr = &p;
    return grad_check([&](Tape& t) { return f(t, t.parameter(p)); }, std::span<Parameter* const>(&ptr, 1),
                      GradCheckOptions{step, 0})
        .max_rel_error;
}

}  // namespace optbench
