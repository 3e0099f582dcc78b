#include "optbench/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "optbench/errors.hpp"
#include "optbench/kernels.hpp"

namespace optbench {

namespace {

constexpr std::array<std::string_view, 3> kModelNames = {"alexnet", "vgg-lite", "resnet-lite"};

LayerSpec conv(std::size_t channels, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias = true) {
    LayerSpec s{LayerKind::conv};
    s.channels = channels;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    s.bias = bias;
    return s;
}

LayerSpec maxpool(std::size_t kernel, std::size_t stride, std::size_t pad = 0) {
    LayerSpec s{LayerKind::maxpool};
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec linear(std::size_t units) {
    LayerSpec s{LayerKind::linear};
    s.units = units;
    return s;
}

LayerSpec dropout(double rate) {
    LayerSpec s{LayerKind::dropout};
    s.rate = rate;
    return s;
}

LayerSpec residual(std::size_t channels, bool bn) {
    LayerSpec s{LayerKind::residual_block};
    s.channels = channels;
    s.batch_norm = bn;
    return s;
}

LayerSpec simple(LayerKind kind) { return LayerSpec{kind}; }

std::size_t scaled(std::size_t width, std::size_t divisor) { return std::max<std::size_t>(1, width / divisor); }

// Krizhevsky et al. widths without the two-GPU grouping. A 227 x 227 input
// makes every stage's output size integral (55, 27, 13, 6).
ModelConfig alexnet(const ModelOptions& o) {
    const auto w = [&](std::size_t c) { return scaled(c, o.width_divisor); };
    ModelConfig c{"alexnet", o.input_channels, o.num_classes, 227, InputAdapter::resize_bilinear, {}};
    auto& L = c.layers;
    L.push_back(conv(w(96), 11, 4, 0));
    L.push_back(simple(LayerKind::relu));
    if (o.local_response_norm) L.push_back(simple(LayerKind::local_response_norm));
    L.push_back(maxpool(3, 2));
    L.push_back(conv(w(256), 5, 1, 2));
    L.push_back(simple(LayerKind::relu));
    if (o.local_response_norm) L.push_back(simple(LayerKind::local_response_norm));
    L.push_back(maxpool(3, 2));
    L.push_back(conv(w(384), 3, 1, 1));
    L.push_back(simple(LayerKind::relu));
    L.push_back(conv(w(384), 3, 1, 1));
    L.push_back(simple(LayerKind::relu));
    L.push_back(conv(w(256), 3, 1, 1));
    L.push_back(simple(LayerKind::relu));
    L.push_back(maxpool(3, 2));
    L.push_back(simple(LayerKind::flatten));
    L.push_back(dropout(0.5));
    L.push_back(linear(w(4096)));
    L.push_back(simple(LayerKind::relu));
    L.push_back(dropout(0.5));
    L.push_back(linear(w(4096)));
    L.push_back(simple(LayerKind::relu));
    L.push_back(linear(o.num_classes));
    return c;
}

// VGG11 with one conv + one max pool per block and a quarter of the widths.
// The classifier hidden width (256) is our choice.
ModelConfig vgg_lite(const ModelOptions& o) {
    ModelConfig c{"vgg-lite", o.input_channels, o.num_classes, 32, InputAdapter::zero_pad, {}};
    for (std::size_t width : {64, 128, 256, 512, 512}) {
        c.layers.push_back(conv(scaled(width / 4, o.width_divisor), 3, 1, 1));
        c.layers.push_back(simple(LayerKind::relu));
        c.layers.push_back(maxpool(2, 2));
    }
    c.layers.push_back(simple(LayerKind::flatten));
    c.layers.push_back(linear(scaled(256, o.width_divisor)));
    c.layers.push_back(simple(LayerKind::relu));
    c.layers.push_back(dropout(0.5));
    c.layers.push_back(linear(scaled(256, o.width_divisor)));
    c.layers.push_back(simple(LayerKind::relu));
    c.layers.push_back(dropout(0.5));
    c.layers.push_back(linear(o.num_classes));
    return c;
}

// ResNet18 stem plus its first residual stage (two BasicBlocks), global average
// pooling and a linear head. A stride-2 7x7 stem needs an odd input, so the
// 28 x 28 image is padded to 29 (one extra row/column at the bottom/right).
ModelConfig resnet_lite(const ModelOptions& o) {
    const std::size_t width = scaled(64, o.width_divisor);
    ModelConfig c{"resnet-lite", o.input_channels, o.num_classes, 29, InputAdapter::zero_pad, {}};
    c.layers.push_back(conv(width, 7, 2, 3, !o.batch_norm));
    if (o.batch_norm) c.layers.push_back(simple(LayerKind::batch_norm));
    c.layers.push_back(simple(LayerKind::relu));
    c.layers.push_back(maxpool(3, 2, 1));
    c.layers.push_back(residual(width, o.batch_norm));
    c.layers.push_back(residual(width, o.batch_norm));
    c.layers.push_back(simple(LayerKind::global_avg_pool));
    c.layers.push_back(linear(o.num_classes));
    return c;
}

std::string valid_names() {
    std::string s;
    for (auto n : kModelNames) {
        if (!s.empty()) s += ", ";
        s += n;
    }
    return s;
}

[[noreturn]] void layer_error(std::size_t index, const LayerSpec& spec, const Shape& in, const std::string& why) {
    throw ConfigError("layer " + std::to_string(index) + " (" + std::string(to_string(spec.kind)) + ") on input " +
                      shape_string(in) + ": " + why);
}

}  // namespace

std::string_view to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::relu: return "relu";
        case LayerKind::linear: return "linear";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dropout: return "dropout";
        case LayerKind::local_response_norm: return "local-response-norm";
        case LayerKind::residual_block: return "residual-block";
        case LayerKind::batch_norm: return "batch-norm";
        case LayerKind::global_avg_pool: return "global-avg-pool";
    }
    return "unknown";
}

std::span<const std::string_view> model_names() { return kModelNames; }

ModelConfig model_config(std::string_view name, const ModelOptions& options) {
    if (options.width_divisor == 0) throw ConfigError("width divisor must be >= 1");
    if (options.input_channels == 0 || options.num_classes == 0) {
        throw ConfigError("input channels and class count must be positive");
    }
    if (name == "alexnet") return alexnet(options);
    if (name == "vgg-lite") return vgg_lite(options);
    if (name == "resnet-lite") return resnet_lite(options);
    throw ConfigError("unknown model '" + std::string(name) + "' (valid: " + valid_names() + ")");
}

std::vector<Shape> shape_trace(const ModelConfig& config) {
    if (config.input_size == 0) throw ConfigError("native input size must be positive");
    if (config.adapter != InputAdapter::none && config.input_size < kImageSize) {
        throw ConfigError("resize and padding adapters need a native input size of at least 28");
    }
    std::vector<Shape> trace;
    trace.push_back({config.input_channels, config.input_size, config.input_size});
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& s = config.layers[i];
        const Shape in = trace.back();
        const bool spatial = in.size() == 3;
        try {
            switch (s.kind) {
                case LayerKind::conv:
                    if (!spatial) layer_error(i, s, in, "needs a spatial input");
                    trace.push_back({s.channels, kernels::conv_out_size(in[1], s.kernel, s.stride, s.pad),
                                     kernels::conv_out_size(in[2], s.kernel, s.stride, s.pad)});
                    break;
                case LayerKind::maxpool:
                    if (!spatial) layer_error(i, s, in, "needs a spatial input");
                    trace.push_back({in[0], kernels::pool_out_size(in[1], s.kernel, s.stride, s.pad),
                                     kernels::pool_out_size(in[2], s.kernel, s.stride, s.pad)});
                    break;
                case LayerKind::residual_block:
                    if (!spatial) layer_error(i, s, in, "needs a spatial input");
                    if (in[0] != s.channels) layer_error(i, s, in, "identity shortcut needs equal widths");
                    trace.push_back(in);
                    break;
                case LayerKind::batch_norm:
                case LayerKind::local_response_norm:
                    if (!spatial) layer_error(i, s, in, "needs a spatial input");
                    trace.push_back(in);
                    break;
                case LayerKind::relu:
                case LayerKind::dropout:
                    trace.push_back(in);
                    break;
                case LayerKind::flatten:
                    trace.push_back({shape_numel(in)});
                    break;
                case LayerKind::global_avg_pool:
                    if (!spatial) layer_error(i, s, in, "needs a spatial input");
                    trace.push_back({in[0]});
                    break;
                case LayerKind::linear:
                    if (in.size() != 1) layer_error(i, s, in, "needs a flat input");
                    trace.push_back({s.units});
                    break;
            }
        } catch (const ConfigError& e) {
            if (std::string(e.what()).rfind("layer ", 0) == 0) throw;
            layer_error(i, s, in, e.what());
        }
    }
    if (trace.back() != Shape{config.num_classes}) {
        throw ConfigError("model '" + config.name + "' ends at " + shape_string(trace.back()) + ", expected [" +
                          std::to_string(config.num_classes) + "]");
    }
    return trace;
}

std::size_t param_count(const ModelConfig& config) {
    const auto trace = shape_trace(config);
    std::size_t total = 0;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& s = config.layers[i];
        const Shape& in = trace[i];
        switch (s.kind) {
            case LayerKind::conv:
                total += s.channels * in[0] * s.kernel * s.kernel + (s.bias ? s.channels : 0);
                break;
            case LayerKind::linear:
                total += in[0] * s.units + s.units;
                break;
            case LayerKind::batch_norm:
                total += 2 * in[0];
                break;
            case LayerKind::residual_block:
                // two 3x3 convs; with batch norm each drops its bias for a gamma/beta pair
                total += 2 * (s.channels * s.channels * 9 + (s.batch_norm ? 2 * s.channels : s.channels));
                break;
            default:
                break;
        }
    }
    return total;
}

Model::Model(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), dropout_rng_(derive_seed(seed, "dropout")) {
    const auto trace = optbench::shape_trace(config_);
    SplitMix64 rng(seed);
    // Kaiming-uniform for layers feeding a ReLU; the output layer uses the
    // unit-gain bound 1/sqrt(fan_in) so untrained logits stay near uniform.
    auto kaiming = [&](std::string name, Shape shape, std::size_t fan_in, double gain_sq = 6.0) {
        Tensor w(std::move(shape));
        const double bound = std::sqrt(gain_sq / static_cast<double>(fan_in));
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        params_.emplace_back(std::move(name), std::move(w));
    };
    auto zeros = [&](std::string name, std::size_t n, double fill = 0.0) {
        params_.emplace_back(std::move(name), Tensor({n}, fill));
    };
    auto add_conv = [&](const std::string& prefix, std::size_t out, std::size_t in, std::size_t k, bool bias) {
        kaiming(prefix + ".weight", {out, in, k, k}, in * k * k);
        if (bias) zeros(prefix + ".bias", out);
    };
    auto add_bn = [&](const std::string& prefix, std::size_t channels) {
        zeros(prefix + ".gamma", channels, 1.0);
        zeros(prefix + ".beta", channels);
        bn_.emplace_back(channels);
    };

    // Reserve up front: the tape keeps raw pointers into params_.
    params_.reserve(4 * config_.layers.size() + 8);
    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const LayerSpec& s = config_.layers[i];
        const Shape& in = trace[i];
        const std::string prefix = std::to_string(i) + "." + std::string(to_string(s.kind));
        slots_.push_back({params_.size(), bn_.size()});
        switch (s.kind) {
            case LayerKind::conv:
                add_conv(prefix, s.channels, in[0], s.kernel, s.bias);
                break;
            case LayerKind::linear:
                kaiming(prefix + ".weight", {in[0], s.units}, in[0], i + 1 == config_.layers.size() ? 1.0 : 6.0);
                zeros(prefix + ".bias", s.units);
                break;
            case LayerKind::batch_norm:
                add_bn(prefix, in[0]);
                break;
            case LayerKind::residual_block:
                add_conv(prefix + ".conv1", s.channels, s.channels, 3, !s.batch_norm);
                if (s.batch_norm) add_bn(prefix + ".bn1", s.channels);
                add_conv(prefix + ".conv2", s.channels, s.channels, 3, !s.batch_norm);
                if (s.batch_norm) add_bn(prefix + ".bn2", s.channels);
                break;
            default:
                break;
        }
    }
}

std::size_t Model::param_count() const noexcept {
    std::size_t n = 0;
    for (const Parameter& p : params_) n += p.size();
    return n;
}

Tensor Model::prepare_input(const Tensor& batch) const {
    const Shape& s = batch.shape();
    if (s.size() != 4 || s[1] != config_.input_channels || s[2] != kImageSize || s[3] != kImageSize) {
        throw DimensionError("model '" + config_.name + "' expects [N x " + std::to_string(config_.input_channels) +
                             " x 28 x 28] input, got " + shape_string(s));
    }
    switch (config_.adapter) {
        case InputAdapter::none:
            if (config_.input_size != kImageSize) {
                throw DimensionError("model '" + config_.name + "' takes " + std::to_string(config_.input_size) +
                                     "-pixel inputs and has no adapter for 28");
            }
            return batch;
        case InputAdapter::resize_bilinear: return kernels::resize_bilinear(batch, config_.input_size, config_.input_size);
        case InputAdapter::zero_pad: return kernels::pad_to(batch, config_.input_size);
    }
    return batch;
}

Var Model::forward(Tape& tape, const Tensor& batch, Mode mode) {
    Var h = tape.constant(prepare_input(batch));
    auto conv_var = [&](std::size_t& p, std::size_t out, Var x, std::size_t stride, std::size_t pad, bool bias) {
        Var w = tape.parameter(params_[p++]);
        Var b = bias ? tape.parameter(params_[p++]) : tape.constant(Tensor({out}));
        return tape.conv2d(x, w, b, stride, pad);
    };
    auto bn_var = [&](std::size_t& p, std::size_t& b, Var x) {
        Var gamma = tape.parameter(params_[p++]);
        Var beta = tape.parameter(params_[p++]);
        return tape.batch_norm(x, gamma, beta, bn_[b++], mode);
    };

    for (std::size_t i = 0; i < config_.layers.size(); ++i) {
        const LayerSpec& s = config_.layers[i];
        std::size_t p = slots_[i].param;
        std::size_t b = slots_[i].bn;
        switch (s.kind) {
            case LayerKind::conv:
                h = conv_var(p, s.channels, h, s.stride, s.pad, s.bias);
                break;
            case LayerKind::maxpool:
                h = tape.maxpool2d(h, s.kernel, s.stride, s.pad);
                break;
            case LayerKind::relu:
                h = tape.relu(h);
                break;
            case LayerKind::linear: {
                Var w = tape.parameter(params_[p]);
                Var bias = tape.parameter(params_[p + 1]);
                h = tape.linear(h, w, bias);
                break;
            }
            case LayerKind::flatten:
                h = tape.flatten(h);
                break;
            case LayerKind::dropout:
                if (mode == Mode::train && s.rate > 0.0) h = tape.dropout(h, s.rate, dropout_rng_);
                break;
            case LayerKind::local_response_norm:
                h = tape.local_response_norm(h, kernels::LrnParams{});
                break;
            case LayerKind::batch_norm:
                h = bn_var(p, b, h);
                break;
            case LayerKind::global_avg_pool:
                h = tape.global_avg_pool(h);
                break;
            case LayerKind::residual_block: {
                const Var identity = h;
                Var y = conv_var(p, s.channels, h, 1, 1, !s.batch_norm);
                if (s.batch_norm) y = bn_var(p, b, y);
                y = tape.relu(y);
                y = conv_var(p, s.channels, y, 1, 1, !s.batch_norm);
                if (s.batch_norm) y = bn_var(p, b, y);
                h = tape.relu(tape.add(y, identity));
                break;
            }
        }
    }
    return h;
}

Tensor Model::predict(const Tensor& batch) {
    Tape tape;
    return tape.value(forward(tape, batch, Mode::eval));
}

Model build_model(std::string_view name, std::uint64_t seed, const ModelOptions& options) {
    return Model(model_config(name, options), seed);
}

}  // namespace optbench
