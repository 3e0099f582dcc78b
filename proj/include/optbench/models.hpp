#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "optbench/autograd.hpp"
#include "optbench/random.hpp"
#include "optbench/tensor.hpp"

namespace optbench {

/// EMNIST images are 28 x 28; every model accepts [N x C x 28 x 28].
inline constexpr std::size_t kImageSize = 28;
inline constexpr std::size_t kNumClasses = 47;

enum class LayerKind {
    conv,
    maxpool,
    relu,
    linear,
    flatten,
    dropout,
    local_response_norm,
    residual_block,
    batch_norm,
    global_avg_pool,
};

std::string_view to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    std::size_t channels = 0;  // conv filters, residual block width
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t pad = 0;
    std::size_t units = 0;  // linear output features
    double rate = 0.0;      // dropout
    bool bias = true;       // conv only
    bool batch_norm = false;  // residual block only
};

/// How a 28 x 28 input is brought to the architecture's native size.
enum class InputAdapter { none, resize_bilinear, zero_pad };

struct ModelConfig {
    std::string name;
    std::size_t input_channels = 1;
    std::size_t num_classes = kNumClasses;
    std::size_t input_size = kImageSize;
    InputAdapter adapter = InputAdapter::none;
    std::vector<LayerSpec> layers;
};

struct ModelOptions {
    std::size_t input_channels = 1;
    std::size_t num_classes = kNumClasses;
    /// Divides every conv width and hidden linear width (never the classifier
    /// output). 1 builds the documented architecture.
    std::size_t width_divisor = 1;
    bool batch_norm = false;           // resnet-lite
    bool local_response_norm = false;  // alexnet
};

/// "alexnet", "vgg-lite", "resnet-lite"
std::span<const std::string_view> model_names();

/// Throws ConfigError listing the valid names for an unknown name.
ModelConfig model_config(std::string_view name, const ModelOptions& options = {});

/// Symbolic per-layer output shapes (batch dimension omitted), starting with the
/// adapted input. Throws ConfigError on any incompatibility, including a final
/// width that differs from num_classes.
std::vector<Shape> shape_trace(const ModelConfig& config);

/// Trainable element count implied by a config, without allocating it.
std::size_t param_count(const ModelConfig& config);

class Model {
  public:
    /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases, drawn in
    /// layer order from SplitMix64(seed). The output layer uses bound
    /// sqrt(1 / fan_in) so untrained logits start near uniform. Dropout masks use an independent
    /// stream derived from the same seed.
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    std::span<Parameter> parameters() noexcept { return params_; }
    std::span<const Parameter> parameters() const noexcept { return params_; }
    std::vector<BatchNormBuffers>& batch_norm_buffers() noexcept { return bn_; }
    const std::vector<BatchNormBuffers>& batch_norm_buffers() const noexcept { return bn_; }
    std::size_t param_count() const noexcept;
    std::vector<Shape> shape_trace() const { return optbench::shape_trace(config_); }

    /// Validates [N x C x 28 x 28] and applies the input adapter.
    Tensor prepare_input(const Tensor& batch) const;
    /// Records the forward pass on `tape` and returns [N x num_classes] logits.
    Var forward(Tape& tape, const Tensor& batch, Mode mode);
    /// Eval-mode logits.
    Tensor predict(const Tensor& batch);

    void reseed_dropout(std::uint64_t seed) noexcept { dropout_rng_ = SplitMix64(seed); }

  private:
    struct Slot {
        std::size_t param = 0;  // first parameter index
        std::size_t bn = 0;     // first batch-norm buffer index
    };

    ModelConfig config_;
    std::vector<Parameter> params_;
    std::vector<BatchNormBuffers> bn_;
    std::vector<Slot> slots_;
    SplitMix64 dropout_rng_;
};

Model build_model(std::string_view name, std::uint64_t seed, const ModelOptions& options = {});

inline std::size_t param_count(const Model& model) { return model.param_count(); }

}  // namespace optbench
