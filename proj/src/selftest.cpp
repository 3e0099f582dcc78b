#include "optbench/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "optbench/grad_check.hpp"
#include "optbench/models.hpp"
#include "optbench/optim.hpp"
#include "optbench/random.hpp"

namespace optbench {

namespace {

Tensor random_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

struct Reporter {
    std::ostream& out;
    std::size_t failures = 0;

    void check(const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "[PASS] " : "[FAIL] ") << name << "  " << detail << '\n';
        if (!ok) ++failures;
    }
};

std::string fmt_err(double e) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "max rel err %.3e", e);
    return buf;
}

std::string seconds_since(std::chrono::steady_clock::time_point t0) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2fs", s);
    return buf;
}

// Weighted sum keeps the loss sensitive to every output element.
Var weighted_sum(Tape& t, Var y, const Tensor& weights) { return t.sum(t.mul(y, t.constant(weights))); }

void op_checks(Reporter& r, double tol) {
    SplitMix64 rng(20240501);
    std::vector<Parameter> ps;
    auto run = [&](const std::string& name, std::vector<Parameter> params, const std::function<Var(Tape&, std::vector<Var>&)>& f) {
        std::vector<Parameter*> ptrs;
        for (auto& p : params) ptrs.push_back(&p);
        auto rep = grad_check(
            [&](Tape& t) {
                std::vector<Var> vars;
                for (auto& p : params) vars.push_back(t.parameter(p));
                return f(t, vars);
            },
            ptrs);
        r.check("grad " + name, rep.max_rel_error < tol, fmt_err(rep.max_rel_error));
    };

    const Tensor w23 = random_tensor({2, 3}, rng);
    run("matmul", {Parameter("a", random_tensor({2, 4}, rng)), Parameter("b", random_tensor({4, 3}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.matmul(v[0], v[1]), w23); });

    const Tensor wconv = random_tensor({2, 3, 3, 3}, rng);
    run("conv2d", {Parameter("x", random_tensor({2, 2, 5, 5}, rng)), Parameter("w", random_tensor({3, 2, 3, 3}, rng)),
                   Parameter("b", random_tensor({3}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.conv2d(v[0], v[1], v[2], 2, 1), wconv); });

    const Tensor wpool = random_tensor({1, 2, 3, 3}, rng);
    run("maxpool2d", {Parameter("x", random_tensor({1, 2, 6, 6}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.maxpool2d(v[0], 3, 2, 1), wpool); });

    const Tensor w34 = random_tensor({3, 4}, rng);
    run("relu", {Parameter("x", random_tensor({3, 4}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.relu(v[0]), w34); });
    run("add_bias", {Parameter("x", random_tensor({3, 4}, rng)), Parameter("b", random_tensor({4}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.add_bias(v[0], v[1]), w34); });
    run("add+mul+scale", {Parameter("a", random_tensor({3, 4}, rng)), Parameter("b", random_tensor({3, 4}, rng))},
        [&](Tape& t, auto& v) { return t.sum(t.scale(t.mul(t.add(v[0], v[1]), v[0]), 0.5)); });

    const Tensor wflat = random_tensor({2, 12}, rng);
    run("flatten", {Parameter("x", random_tensor({2, 3, 2, 2}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.flatten(v[0]), wflat); });

    const std::vector<int> targets = {0, 4, 2};
    run("softmax_ce", {Parameter("z", random_tensor({3, 5}, rng, -3, 3))},
        [&](Tape& t, auto& v) { return t.softmax_cross_entropy(v[0], targets); });

    run("dropout", {Parameter("x", random_tensor({3, 4}, rng))}, [&](Tape& t, auto& v) {
        SplitMix64 mask_rng(7);
        return weighted_sum(t, t.dropout(v[0], 0.5, mask_rng), w34);
    });

    const Tensor wgap = random_tensor({2, 3}, rng);
    run("global_avg_pool", {Parameter("x", random_tensor({2, 3, 3, 3}, rng))},
        [&](Tape& t, auto& v) { return weighted_sum(t, t.global_avg_pool(v[0]), wgap); });

    const Tensor wbn = random_tensor({2, 3, 2, 2}, rng);
    for (Mode mode : {Mode::train, Mode::eval}) {
        run(mode == Mode::train ? "batch_norm(train)" : "batch_norm(eval)",
            {Parameter("x", random_tensor({2, 3, 2, 2}, rng)), Parameter("g", random_tensor({3}, rng, 0.5, 1.5)),
             Parameter("b", random_tensor({3}, rng))},
            [&, mode](Tape& t, auto& v) {
                BatchNormBuffers buf(3);
                buf.running_var.fill(0.7);
                return weighted_sum(t, t.batch_norm(v[0], v[1], v[2], buf, mode), wbn);
            });
    }

    const Tensor wlrn = random_tensor({1, 6, 2, 2}, rng);
    run("local_response_norm", {Parameter("x", random_tensor({1, 6, 2, 2}, rng, -3, 3))}, [&](Tape& t, auto& v) {
        return weighted_sum(t, t.local_response_norm(v[0], kernels::LrnParams{5, 0.5, 0.75, 1.0}), wlrn);
    });
}

void model_checks(Reporter& r, const SelftestOptions& o) {
    struct Case {
        const char* name;
        std::size_t divisor;
    };
    const Case cases[] = {{"alexnet", o.reduced_models ? 16u : 1u},
                          {"vgg-lite", o.reduced_models ? 4u : 1u},
                          {"resnet-lite", o.reduced_models ? 8u : 1u}};
    SplitMix64 rng(99);
    for (const auto& c : cases) {
        ModelOptions opts;
        opts.width_divisor = c.divisor;
        Model model = build_model(c.name, 1234, opts);
        // Zero biases over zero padding sit exactly on the ReLU kink; move off it.
        for (auto& p : model.parameters()) {
            if (p.name.ends_with(".bias")) {
                for (double& b : p.value.data()) b = rng.uniform(-0.1, 0.1);
            }
        }
        const Tensor x = random_tensor({2, 1, kImageSize, kImageSize}, rng, 0.0, 1.0);
        const std::vector<int> y = {3, 41};
        std::vector<Parameter*> ptrs;
        for (auto& p : model.parameters()) ptrs.push_back(&p);
        const auto t0 = std::chrono::steady_clock::now();
        auto rep = grad_check(
            [&](Tape& t) { return t.softmax_cross_entropy(model.forward(t, x, Mode::eval), y); }, ptrs,
            GradCheckOptions{1e-6, 2});
        r.check(std::string("grad model ") + c.name + " (width/" + std::to_string(c.divisor) + ")",
                rep.max_rel_error < o.tolerance, fmt_err(rep.max_rel_error) + " " + rep.worst + " over " +
                                                     std::to_string(rep.coordinates) + " coords, " + seconds_since(t0));
    }
}

// Straight-line scalar references, deliberately independent of optim.cpp.
struct ScalarRef {
    double theta = 0.5, m = 0, v = 0, s = 0, vmax = 0;
    int t = 0;
};

double ref_step(OptimizerKind kind, ScalarRef& st, double g, const HyperParams& hp, bool amsgrad_oracle = false) {
    st.t += 1;
    if (kind == OptimizerKind::sgd) {
        st.m = hp.momentum * st.m + g;
        st.theta = st.theta - hp.lr * st.m;
        return st.theta;
    }
    st.m = hp.beta1 * st.m + (1 - hp.beta1) * g;
    const double mh = st.m / (1 - std::pow(hp.beta1, st.t));
    if (kind == OptimizerKind::adabelief) {
        st.s = hp.beta2 * st.s + (1 - hp.beta2) * (g - st.m) * (g - st.m) + hp.eps;
        st.theta = st.theta - hp.lr * mh / (std::sqrt(st.s / (1 - std::pow(hp.beta2, st.t))) + hp.eps);
        return st.theta;
    }
    st.v = hp.beta2 * st.v + (1 - hp.beta2) * g * g;
    const double vh = st.v / (1 - std::pow(hp.beta2, st.t));
    if (kind == OptimizerKind::adam) {
        st.theta = st.theta - hp.lr * mh / (std::sqrt(vh) + hp.eps);
        return st.theta;
    }
    st.vmax = std::max(st.vmax, vh);
    const double denom = amsgrad_oracle ? std::sqrt(st.vmax) : std::pow(st.vmax, hp.padam_p);
    st.theta = st.theta - hp.lr * mh / (denom + hp.eps);
    return st.theta;
}

void optimizer_checks(Reporter& r) {
    for (OptimizerKind kind : kAllOptimizers) {
        HyperParams hp;
        SplitMix64 rng(5);
        ScalarRef ref;
        std::vector<Parameter> p{Parameter("theta", Tensor::scalar(0.5))};
        OptimizerState state;
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const double g = rng.uniform(-2.0, 2.0);
            p[0].grad[0] = g;
            switch (kind) {
                case OptimizerKind::sgd: sgd_momentum_step(p, state, hp); break;
                case OptimizerKind::adam: adam_step(p, state, hp); break;
                case OptimizerKind::adabelief: adabelief_step(p, state, hp); break;
                case OptimizerKind::padam: padam_step(p, state, hp); break;
            }
            worst = std::max(worst, std::abs(p[0].value[0] - ref_step(kind, ref, g, hp)));
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "max abs diff %.3e", worst);
        r.check("oracle " + std::string(to_string(kind)) + " 100 steps", worst <= 1e-12, buf);
    }

    HyperParams hp;
    hp.padam_p = 0.5;
    SplitMix64 rng(11);
    ScalarRef ref;
    std::vector<Parameter> p{Parameter("theta", Tensor::scalar(0.5))};
    OptimizerState state;
    bool identical = true;
    for (int i = 0; i < 50; ++i) {
        const double g = rng.normal();
        p[0].grad[0] = g;
        padam_step(p, state, hp);
        identical = identical && p[0].value[0] == ref_step(OptimizerKind::padam, ref, g, hp, true);
    }
    r.check("padam(p=0.5) == amsgrad", identical, identical ? "bit-identical over 50 steps" : "trajectories differ");
}

}  // namespace

std::size_t run_selftest(std::ostream& out, const SelftestOptions& options) {
    Reporter r{out};
    if (options.gradients) {
        op_checks(r, options.tolerance);
        model_checks(r, options);
    }
    if (options.optimizers) optimizer_checks(r);
    out << (r.failures == 0 ? "selftest passed\n" : "selftest FAILED: " + std::to_string(r.failures) + " check(s)\n");
    return r.failures;
}

}  // namespace optbench
