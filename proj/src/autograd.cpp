#include "optbench/autograd.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "optbench/errors.hpp"

namespace optbench {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::constant: return "constant";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::maxpool2d: return "maxpool2d";
        case OpKind::relu: return "relu";
        case OpKind::add_bias: return "add_bias";
        case OpKind::add: return "add";
        case OpKind::mul: return "mul";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::flatten: return "flatten";
        case OpKind::softmax_ce: return "softmax_ce";
        case OpKind::dropout: return "dropout";
        case OpKind::global_avg_pool: return "global_avg_pool";
        case OpKind::batch_norm: return "batch_norm";
        case OpKind::lrn: return "lrn";
    }
    return "unknown";
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) {
        throw StateError("variable does not belong to this tape");
    }
    return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.param ? n.param->value : n.value;
}

const Tensor& Tape::grad(Var v) const {
    node(v);
    if (v.id >= grads_.size()) {
        throw StateError("gradient requested before backward");
    }
    return grads_[v.id];
}

OpKind Tape::kind(Var v) const { return node(v).kind; }

Var Tape::push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, Saved saved) {
    bool needs_grad = false;
    for (std::size_t i : inputs) needs_grad = needs_grad || nodes_[i].requires_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), nullptr, needs_grad, std::move(saved)});
    return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(OpKind::constant, {}, std::move(value)); }

Var Tape::parameter(Parameter& p) {
    if (auto it = leaf_ids_.find(&p); it != leaf_ids_.end()) {
        return Var{it->second};
    }
    nodes_.push_back(Node{OpKind::leaf, {}, Tensor{}, &p, true, {}});
    leaf_ids_.emplace(&p, nodes_.size() - 1);
    return Var{nodes_.size() - 1};
}

Var Tape::matmul(Var a, Var b) {
    return push(OpKind::matmul, {a.id, b.id}, kernels::matmul(value(a), value(b)));
}

Var Tape::conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad) {
    Tensor out = kernels::conv2d_forward(value(x), value(weight), value(bias), stride, pad);
    return push(OpKind::conv2d, {x.id, weight.id, bias.id}, std::move(out), ConvSaved{stride, pad});
}

Var Tape::maxpool2d(Var x, std::size_t kernel, std::size_t stride, std::size_t pad) {
    auto r = kernels::maxpool2d_forward(value(x), kernel, stride, pad);
    return push(OpKind::maxpool2d, {x.id}, std::move(r.out), PoolSaved{std::move(r.argmax)});
}

Var Tape::relu(Var x) {
    Tensor out = value(x);
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return push(OpKind::relu, {x.id}, std::move(out));
}

Var Tape::add_bias(Var x, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& bv = value(bias);
    if (xv.rank() != 2 || bv.size() != xv.dim(1)) {
        throw DimensionError("add_bias shape mismatch: " + shape_string(xv.shape()) + " + " +
                             shape_string(bv.shape()));
    }
    Tensor out = xv;
    const std::size_t f = xv.dim(1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % f];
    return push(OpKind::add_bias, {x.id, bias.id}, std::move(out));
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape() != bv.shape()) {
        throw DimensionError("add shape mismatch: " + shape_string(av.shape()) + " + " + shape_string(bv.shape()));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return push(OpKind::add, {a.id, b.id}, std::move(out));
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape() != bv.shape()) {
        throw DimensionError("mul shape mismatch: " + shape_string(av.shape()) + " * " + shape_string(bv.shape()));
    }
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return push(OpKind::mul, {a.id, b.id}, std::move(out));
}

Var Tape::scale(Var x, double factor) {
    Tensor out = value(x);
    for (double& v : out.data()) v *= factor;
    return push(OpKind::scale, {x.id}, std::move(out), ScaleSaved{factor});
}

Var Tape::sum(Var x) {
    double s = 0.0;
    for (double v : value(x).data()) s += v;
    return push(OpKind::sum, {x.id}, Tensor::scalar(s));
}

Var Tape::flatten(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() < 2) {
        throw DimensionError("flatten expects rank >= 2, got " + shape_string(xv.shape()));
    }
    return push(OpKind::flatten, {x.id}, xv.reshaped({xv.dim(0), xv.size() / xv.dim(0)}));
}

Var Tape::softmax_cross_entropy(Var logits, std::span<const int> targets) {
    const Tensor& z = value(logits);
    if (z.rank() != 2) {
        throw DimensionError("cross entropy expects [N x C] logits, got " + shape_string(z.shape()));
    }
    const auto losses = kernels::cross_entropy_per_sample(z, targets);
    double total = 0.0;
    for (double l : losses) total += l;
    const double mean = total / static_cast<double>(losses.size());
    return push(OpKind::softmax_ce, {logits.id}, Tensor::scalar(mean),
                CrossEntropySaved{kernels::softmax_rows(z), std::vector<int>(targets.begin(), targets.end())});
}

Var Tape::dropout(Var x, double rate, SplitMix64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    const Tensor& xv = value(x);
    std::vector<double> mask(xv.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0;
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return push(OpKind::dropout, {x.id}, std::move(out), MaskSaved{std::move(mask)});
}

Var Tape::global_avg_pool(Var x) {
    const Tensor& xv = value(x);
    if (xv.rank() != 4) {
        throw DimensionError("global_avg_pool expects 4-d input, got " + shape_string(xv.shape()));
    }
    const std::size_t planes = xv.dim(0) * xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor out({xv.dim(0), xv.dim(1)});
    for (std::size_t p = 0; p < planes; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += xv[p * hw + i];
        out[p] = s / static_cast<double>(hw);
    }
    return push(OpKind::global_avg_pool, {x.id}, std::move(out));
}

Var Tape::batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers& buffers, Mode mode) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gamma);
    const Tensor& bv = value(beta);
    if (xv.rank() != 4 || gv.size() != xv.dim(1) || bv.size() != xv.dim(1) ||
        buffers.running_mean.size() != xv.dim(1)) {
        throw DimensionError("batch_norm shape mismatch for input " + shape_string(xv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    const std::size_t count = n * hw;
    std::vector<double> mean(c), var(c);
    if (mode == Mode::train) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double s = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i) s += xv[(b * c + ch) * hw + i];
            mean[ch] = s / static_cast<double>(count);
            double q = 0.0;
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t i = 0; i < hw; ++i) {
                    const double d = xv[(b * c + ch) * hw + i] - mean[ch];
                    q += d * d;
                }
            var[ch] = q / static_cast<double>(count);
            const double unbiased = count > 1 ? q / static_cast<double>(count - 1) : var[ch];
            buffers.running_mean[ch] = (1.0 - buffers.momentum) * buffers.running_mean[ch] + buffers.momentum * mean[ch];
            buffers.running_var[ch] = (1.0 - buffers.momentum) * buffers.running_var[ch] + buffers.momentum * unbiased;
        }
    } else {
        for (std::size_t ch = 0; ch < c; ++ch) {
            mean[ch] = buffers.running_mean[ch];
            var[ch] = buffers.running_var[ch];
        }
    }
    std::vector<double> inv_std(c);
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + buffers.eps);
    Tensor xhat(xv.shape());
    Tensor out(xv.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t idx = (b * c + ch) * hw + i;
                xhat[idx] = (xv[idx] - mean[ch]) * inv_std[ch];
                out[idx] = gv[ch] * xhat[idx] + bv[ch];
            }
    return push(OpKind::batch_norm, {x.id, gamma.id, beta.id}, std::move(out),
                BatchNormSaved{std::move(xhat), std::move(inv_std), mode});
}

Var Tape::local_response_norm(Var x, const kernels::LrnParams& params) {
    std::vector<double> denom;
    Tensor out = kernels::lrn_forward(value(x), params, denom);
    return push(OpKind::lrn, {x.id}, std::move(out), LrnSaved{params, std::move(denom)});
}

void Tape::accumulate(std::size_t id, Tensor g) {
    if (!nodes_[id].requires_grad) return;
    Tensor& dst = grads_[id];
    if (dst.empty()) {
        dst = std::move(g);
        return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

void Tape::backward(Var loss) {
    if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
        throw StateError("backward called without a recorded forward pass");
    }
    if (value(loss).size() != 1) {
        throw DimensionError("backward needs a scalar loss, got " + shape_string(value(loss).shape()));
    }
    grads_.assign(nodes_.size(), Tensor{});
    grads_[loss.id] = Tensor::scalar(1.0);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        if (grads_[id].empty() || !nodes_[id].requires_grad) continue;
        backward_node(id);
    }
    for (const auto& [param, id] : leaf_ids_) {
        (void)param;
        const Tensor& g = grads_[id];
        if (g.empty()) continue;
        Tensor& dst = nodes_[id].param->grad;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
}

void Tape::backward_node(std::size_t id) {
    const Node& nd = nodes_[id];
    const Tensor& g = grads_[id];
    auto input_value = [&](std::size_t k) -> const Tensor& { return value(Var{nd.inputs[k]}); };
    auto needs = [&](std::size_t k) { return nodes_[nd.inputs[k]].requires_grad; };

    switch (nd.kind) {
        case OpKind::leaf:
        case OpKind::constant:
            return;
        case OpKind::matmul: {
            const Tensor& a = input_value(0);
            const Tensor& b = input_value(1);
            const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
            if (needs(0)) {
                Tensor da(a.shape());
                kernels::gemm_nt(m, k, n, g.raw(), b.raw(), da.raw(), false);
                accumulate(nd.inputs[0], std::move(da));
            }
            if (needs(1)) {
                Tensor db(b.shape());
                kernels::gemm_tn(k, n, m, a.raw(), g.raw(), db.raw(), false);
                accumulate(nd.inputs[1], std::move(db));
            }
            return;
        }
        case OpKind::conv2d: {
            const auto& s = std::get<ConvSaved>(nd.saved);
            auto grads = kernels::conv2d_backward(input_value(0), input_value(1), g, s.stride, s.pad, needs(0));
            if (needs(0)) accumulate(nd.inputs[0], std::move(grads.dx));
            accumulate(nd.inputs[1], std::move(grads.dw));
            accumulate(nd.inputs[2], std::move(grads.db));
            return;
        }
        case OpKind::maxpool2d: {
            const auto& s = std::get<PoolSaved>(nd.saved);
            accumulate(nd.inputs[0], kernels::maxpool2d_backward(g, s.argmax, input_value(0).shape()));
            return;
        }
        case OpKind::relu: {
            const Tensor& x = input_value(0);
            Tensor dx(x.shape());
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
            accumulate(nd.inputs[0], std::move(dx));
            return;
        }
        case OpKind::add_bias: {
            accumulate(nd.inputs[0], g);
            if (needs(1)) {
                const std::size_t f = g.dim(1);
                Tensor db({f});
                for (std::size_t i = 0; i < g.size(); ++i) db[i % f] += g[i];
                accumulate(nd.inputs[1], std::move(db));
            }
            return;
        }
        case OpKind::add:
            accumulate(nd.inputs[0], g);
            accumulate(nd.inputs[1], g);
            return;
        case OpKind::mul: {
            const Tensor& a = input_value(0);
            const Tensor& b = input_value(1);
            Tensor da(a.shape()), db(b.shape());
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] = g[i] * b[i];
                db[i] = g[i] * a[i];
            }
            accumulate(nd.inputs[0], std::move(da));
            accumulate(nd.inputs[1], std::move(db));
            return;
        }
        case OpKind::scale: {
            const double f = std::get<ScaleSaved>(nd.saved).factor;
            Tensor dx = g;
            for (double& v : dx.data()) v *= f;
            accumulate(nd.inputs[0], std::move(dx));
            return;
        }
        case OpKind::sum:
            accumulate(nd.inputs[0], Tensor(input_value(0).shape(), g[0]));
            return;
        case OpKind::flatten:
            accumulate(nd.inputs[0], g.reshaped(input_value(0).shape()));
            return;
        case OpKind::softmax_ce: {
            const auto& s = std::get<CrossEntropySaved>(nd.saved);
            Tensor dz = s.probs;
            const std::size_t n = dz.dim(0), c = dz.dim(1);
            const double w = g[0] / static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                dz[i * c + static_cast<std::size_t>(s.targets[i])] -= 1.0;
            }
            for (double& v : dz.data()) v *= w;
            accumulate(nd.inputs[0], std::move(dz));
            return;
        }
        case OpKind::dropout: {
            const auto& mask = std::get<MaskSaved>(nd.saved).mask;
            Tensor dx = g;
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask[i];
            accumulate(nd.inputs[0], std::move(dx));
            return;
        }
        case OpKind::global_avg_pool: {
            const Shape& xs = input_value(0).shape();
            const std::size_t hw = xs[2] * xs[3];
            Tensor dx(xs);
            for (std::size_t p = 0; p < g.size(); ++p) {
                const double v = g[p] / static_cast<double>(hw);
                for (std::size_t i = 0; i < hw; ++i) dx[p * hw + i] = v;
            }
            accumulate(nd.inputs[0], std::move(dx));
            return;
        }
        case OpKind::batch_norm: {
            const auto& s = std::get<BatchNormSaved>(nd.saved);
            const Tensor& gamma = input_value(1);
            const Shape& xs = s.xhat.shape();
            const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
            const double count = static_cast<double>(n * hw);
            Tensor dx(xs), dgamma({c}), dbeta({c});
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const std::size_t idx = (b * c + ch) * hw + i;
                        sum_g += g[idx];
                        sum_gx += g[idx] * s.xhat[idx];
                    }
                dgamma[ch] = sum_gx;
                dbeta[ch] = sum_g;
                const double k = gamma[ch] * s.inv_std[ch];
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t i = 0; i < hw; ++i) {
                        const std::size_t idx = (b * c + ch) * hw + i;
                        dx[idx] = s.mode == Mode::train
                                      ? k * (g[idx] - sum_g / count - s.xhat[idx] * sum_gx / count)
                                      : k * g[idx];
                    }
            }
            accumulate(nd.inputs[0], std::move(dx));
            accumulate(nd.inputs[1], std::move(dgamma));
            accumulate(nd.inputs[2], std::move(dbeta));
            return;
        }
        case OpKind::lrn: {
            const auto& s = std::get<LrnSaved>(nd.saved);
            accumulate(nd.inputs[0], kernels::lrn_backward(input_value(0), g, s.denom, s.params));
            return;
        }
    }
}

void Tape::clear() {
    nodes_.clear();
    grads_.clear();
    leaf_ids_.clear();
}

}  // namespace optbench
