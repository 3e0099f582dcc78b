#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "optbench/tensor.hpp"

// Raw forward/backward kernels on dense tensors. The autodiff tape calls
// these; they are also usable directly for inference-only work.
//
// Every output element is reduced in a fixed order that depends only on the
// reduction length, never on how many rows are being computed, so results are
// bit-identical across runs and independent of batch size.
namespace optbench::kernels {

/// C[MxN] (+)= A[MxK] * B[KxN]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);
/// C[MxN] (+)= A[MxK] * B[NxK]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);
/// C[MxN] (+)= A[KxM]^T * B[KxN]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Output extent of a convolution; throws ConfigError unless
/// (in + 2*pad - kernel) / stride + 1 is a positive integer.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);
/// Output extent of a pooling window (floor mode); throws ConfigError if the
/// window is larger than the padded input.
std::size_t pool_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad);

struct Conv2dGeometry {
    std::size_t batch, in_channels, in_h, in_w;
    std::size_t filters, kernel_h, kernel_w;
    std::size_t stride, pad;
    std::size_t out_h, out_w;

    static Conv2dGeometry make(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad);
    std::size_t patch_size() const noexcept { return in_channels * kernel_h * kernel_w; }
    std::size_t out_plane() const noexcept { return out_h * out_w; }
};

/// Cross-correlation (no kernel flip): x[NxCxHxW], w[FxCxkHxkW], b[F].
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad);

struct Conv2dGrads {
    Tensor dx, dw, db;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout, std::size_t stride, std::size_t pad,
                            bool need_dx = true);

struct MaxPoolResult {
    Tensor out;
    std::vector<std::size_t> argmax;  // flat input index per output element
};
/// Padded positions never win. Ties resolve to the first element in row-major window order.
MaxPoolResult maxpool2d_forward(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad = 0);
Tensor maxpool2d_backward(const Tensor& dout, std::span<const std::size_t> argmax, const Shape& input_shape);

struct LrnParams {
    std::size_t size = 5;
    double alpha = 1e-4;
    double beta = 0.75;
    double k = 2.0;
};
/// Cross-channel local response normalisation:
///   y_c = x_c * (k + alpha/size * sum_{c' in window(c)} x_c'^2)^-beta
/// `denom` receives the bracketed term per element.
Tensor lrn_forward(const Tensor& x, const LrnParams& p, std::vector<double>& denom);
Tensor lrn_backward(const Tensor& x, const Tensor& dout, std::span<const double> denom, const LrnParams& p);

/// Bilinear resampling of [NxCxHxW] with half-pixel centres (align_corners = false).
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// Zero-pads [NxCxHxW] to size x size; the top/left side gets floor(extra/2).
Tensor pad_to(const Tensor& x, std::size_t size);

/// Row-wise softmax of [NxC] logits with max subtraction.
Tensor softmax_rows(const Tensor& logits);
/// -log softmax(logits[n])[targets[n]] for every row; validates targets.
std::vector<double> cross_entropy_per_sample(const Tensor& logits, std::span<const int> targets);
/// Index of the largest logit per row, lowest index on ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace optbench::kernels
