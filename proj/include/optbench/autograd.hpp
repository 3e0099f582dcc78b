#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "optbench/kernels.hpp"
#include "optbench/random.hpp"
#include "optbench/tensor.hpp"

namespace optbench {

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    std::string name;
    Tensor value;
    Tensor grad;

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad() { grad.fill(0.0); }
};

enum class Mode { train, eval };

/// Running statistics for batch normalisation; not trainable.
struct BatchNormBuffers {
    Tensor running_mean;
    Tensor running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormBuffers(std::size_t channels = 1)
        : running_mean(Shape{channels}, 0.0), running_var(Shape{channels}, 1.0) {}
};

enum class OpKind {
    leaf,
    constant,
    matmul,
    conv2d,
    maxpool2d,
    relu,
    add_bias,
    add,
    mul,
    scale,
    sum,
    flatten,
    softmax_ce,
    dropout,
    global_avg_pool,
    batch_norm,
    lrn,
};

std::string_view to_string(OpKind kind);

/// Handle to a node on a Tape.
struct Var {
    static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
    std::size_t id = kInvalid;
    bool valid() const noexcept { return id != kInvalid; }
};

/// Append-only record of a forward computation. `backward` walks the nodes in
/// strict reverse order and adds d(loss)/d(param) into each reachable
/// Parameter's grad exactly once per call.
///
/// Parameters are referenced, not copied; they must outlive the tape and must
/// not be modified between forward and backward.
class Tape {
  public:
    Var constant(Tensor value);
    /// Registering the same Parameter twice returns the same node.
    Var parameter(Parameter& p);

    Var matmul(Var a, Var b);
    Var conv2d(Var x, Var weight, Var bias, std::size_t stride, std::size_t pad);
    Var maxpool2d(Var x, std::size_t kernel, std::size_t stride, std::size_t pad = 0);
    Var relu(Var x);
    /// [N x F] + [F]
    Var add_bias(Var x, Var bias);
    Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double factor);
    Var sum(Var x);
    /// [N x ...] -> [N x rest]
    Var flatten(Var x);
    /// Mean over the batch of -log softmax(logits)[target].
    Var softmax_cross_entropy(Var logits, std::span<const int> targets);
    /// Inverted dropout; every element is kept with probability 1 - rate and scaled by 1/(1 - rate).
    Var dropout(Var x, double rate, SplitMix64& rng);
    /// [N x C x H x W] -> [N x C]
    Var global_avg_pool(Var x);
    /// Per-channel normalisation of [N x C x H x W]. Train mode normalises with
    /// batch statistics and updates `buffers`; eval mode uses the running ones.
    Var batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers& buffers, Mode mode);
    Var local_response_norm(Var x, const kernels::LrnParams& params);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward's loss w.r.t. this node.
    const Tensor& grad(Var v) const;
    OpKind kind(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    void backward(Var loss);
    void clear();

  private:
    struct ConvSaved {
        std::size_t stride, pad;
    };
    struct PoolSaved {
        std::vector<std::size_t> argmax;
    };
    struct CrossEntropySaved {
        Tensor probs;
        std::vector<int> targets;
    };
    struct MaskSaved {
        std::vector<double> mask;
    };
    struct ScaleSaved {
        double factor;
    };
    struct BatchNormSaved {
        Tensor xhat;
        std::vector<double> inv_std;
        Mode mode;
    };
    struct LrnSaved {
        kernels::LrnParams params;
        std::vector<double> denom;
    };
    using Saved = std::variant<std::monostate, ConvSaved, PoolSaved, CrossEntropySaved, MaskSaved, ScaleSaved,
                               BatchNormSaved, LrnSaved>;

    struct Node {
        OpKind kind;
        std::vector<std::size_t> inputs;
        Tensor value;  // empty for parameter leaves
        Parameter* param = nullptr;
        bool requires_grad = false;
        Saved saved;
    };

    const Node& node(Var v) const;
    Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, Saved saved = {});
    void accumulate(std::size_t id, Tensor g);
    void backward_node(std::size_t id);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Parameter*, std::size_t> leaf_ids_;
};

}  // namespace optbench
