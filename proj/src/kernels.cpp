#include "optbench/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "optbench/errors.hpp"

namespace optbench::kernels {

namespace {

void zero(double* c, std::size_t count) { std::fill(c, c + count, 0.0); }

void im2col(const double* x, const Conv2dGeometry& g, double* col) {
    const std::size_t plane = g.out_plane();
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const double* xc = x + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    double* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(iy) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const double* col, const Conv2dGeometry& g, double* dx) {
    const std::size_t plane = g.out_plane();
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        double* dxc = dx + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < g.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < g.kernel_w; ++kj) {
                const double* row = col + ((c * g.kernel_h + ki) * g.kernel_w + kj) * plane;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    double* dst = dxc + static_cast<std::size_t>(iy) * g.in_w;
                    const double* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                             shape_string(t.shape()));
    }
}

}  // namespace

namespace {

// Every C element is accumulated in ascending k order starting from its
// initial value, whatever path or blocking handles it, so a row's result does
// not depend on how many other rows are in the product.
inline double madd(double a, double b, double c) {
#ifdef __FMA__
    return std::fma(a, b, c);
#else
    return a * b + c;
#endif
}

constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;

// c[kMr x kNr] (row stride ldc) += a[kMr x k] (row stride lda) * bp[k x kNr] (packed)
void micro_kernel(std::size_t k, const double* a, std::size_t lda, const double* bp, double* c, std::size_t ldc) {
    double acc[kMr][kNr];
    for (std::size_t r = 0; r < kMr; ++r) {
#pragma omp simd
        for (std::size_t j = 0; j < kNr; ++j) acc[r][j] = c[r * ldc + j];
    }
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* __restrict br = bp + kk * kNr;
        for (std::size_t r = 0; r < kMr; ++r) {
            const double x = a[r * lda + kk];
#pragma omp simd
            for (std::size_t j = 0; j < kNr; ++j) acc[r][j] = madd(x, br[j], acc[r][j]);
        }
    }
    for (std::size_t r = 0; r < kMr; ++r) {
#pragma omp simd
        for (std::size_t j = 0; j < kNr; ++j) c[r * ldc + j] = acc[r][j];
    }
}

void micro_row(std::size_t k, const double* a, const double* bp, double* c) {
    double acc[kNr];
#pragma omp simd
    for (std::size_t j = 0; j < kNr; ++j) acc[j] = c[j];
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* __restrict br = bp + kk * kNr;
        const double x = a[kk];
#pragma omp simd
        for (std::size_t j = 0; j < kNr; ++j) acc[j] = madd(x, br[j], acc[j]);
    }
#pragma omp simd
    for (std::size_t j = 0; j < kNr; ++j) c[j] = acc[j];
}

// Few rows: stream whole rows of b so large weight matrices are read once, in order.
void gemm_few_rows(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const double* __restrict br = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double x = a[i * k + kk];
            double* __restrict cr = c + i * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) cr[j] = madd(x, br[j], cr[j]);
        }
    }
}

std::vector<double> transposed(const double* src, std::size_t rows, std::size_t cols) {
    std::vector<double> dst(rows * cols);
    constexpr std::size_t kTile = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
        const std::size_t r1 = std::min(rows, r0 + kTile);
        for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
            const std::size_t c1 = std::min(cols, c0 + kTile);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t cc = c0; cc < c1; ++cc) dst[cc * rows + r] = src[r * cols + cc];
            }
        }
    }
    return dst;
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (!accumulate) zero(c, m * n);
    if (m == 0 || n == 0 || k == 0) return;
    if (m < kMr) {
        gemm_few_rows(m, n, k, a, b, c);
        return;
    }
    std::vector<double> packed(k * kNr);
    std::vector<double> edge;
    for (std::size_t j0 = 0; j0 < n; j0 += kNr) {
        const std::size_t w = std::min(kNr, n - j0);
        for (std::size_t kk = 0; kk < k; ++kk) {
            double* dst = packed.data() + kk * kNr;
            std::copy(b + kk * n + j0, b + kk * n + j0 + w, dst);
            std::fill(dst + w, dst + kNr, 0.0);
        }
        // A partial strip works on a zero-padded copy of its columns of c.
        double* cs = c + j0;
        std::size_t ldc = n;
        if (w < kNr) {
            edge.assign(m * kNr, 0.0);
            for (std::size_t i = 0; i < m; ++i) std::copy(c + i * n + j0, c + i * n + j0 + w, edge.data() + i * kNr);
            cs = edge.data();
            ldc = kNr;
        }
        std::size_t i = 0;
        for (; i + kMr <= m; i += kMr) micro_kernel(k, a + i * k, k, packed.data(), cs + i * ldc, ldc);
        for (; i < m; ++i) micro_row(k, a + i * k, packed.data(), cs + i * ldc);
        if (w < kNr) {
            for (std::size_t i2 = 0; i2 < m; ++i2) {
                std::copy(edge.data() + i2 * kNr, edge.data() + i2 * kNr + w, c + i2 * n + j0);
            }
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    if (m >= kMr) {
        const auto bt = transposed(b, n, k);
        gemm_nn(m, n, k, a, bt.data(), c, accumulate);
        return;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double* __restrict ar = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* __restrict br = b + j * k;
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (std::size_t kk = 0; kk < k; ++kk) {
                s += ar[kk] * br[kk];
            }
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    const auto at = transposed(a, k, m);
    gemm_nn(m, n, k, at.data(), b, c, accumulate);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out({a.dim(0), b.dim(1)});
    gemm_nn(a.dim(0), b.dim(1), a.dim(1), a.raw(), b.raw(), out.raw(), false);
    return out;
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0) throw ConfigError("convolution stride must be positive");
    const std::size_t padded = in + 2 * pad;
    if (kernel == 0 || kernel > padded) {
        throw ConfigError("convolution kernel " + std::to_string(kernel) + " does not fit padded input " +
                          std::to_string(padded));
    }
    if ((padded - kernel) % stride != 0) {
        throw ConfigError("convolution output size (" + std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                          std::to_string(kernel) + ")/" + std::to_string(stride) + " + 1 is not an integer");
    }
    return (padded - kernel) / stride + 1;
}

std::size_t pool_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
    if (stride == 0 || kernel == 0) throw ConfigError("pooling kernel and stride must be positive");
    if (2 * pad > kernel) throw ConfigError("pooling pad must be at most half the window");
    const std::size_t padded = in + 2 * pad;
    if (kernel > padded) {
        throw ConfigError("pooling window " + std::to_string(kernel) + " larger than input " + std::to_string(padded));
    }
    return (padded - kernel) / stride + 1;
}

Conv2dGeometry Conv2dGeometry::make(const Shape& x, const Shape& w, std::size_t stride, std::size_t pad) {
    if (x.size() != 4 || w.size() != 4) {
        throw DimensionError("conv2d expects 4-d input and weight, got " + shape_string(x) + " and " + shape_string(w));
    }
    if (x[1] != w[1]) {
        throw DimensionError("conv2d channel mismatch: input " + shape_string(x) + ", weight " + shape_string(w));
    }
    Conv2dGeometry g{};
    g.batch = x[0];
    g.in_channels = x[1];
    g.in_h = x[2];
    g.in_w = x[3];
    g.filters = w[0];
    g.kernel_h = w[2];
    g.kernel_w = w[3];
    g.stride = stride;
    g.pad = pad;
    g.out_h = conv_out_size(g.in_h, g.kernel_h, stride, pad);
    g.out_w = conv_out_size(g.in_w, g.kernel_w, stride, pad);
    return g;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    const auto g = Conv2dGeometry::make(x.shape(), w.shape(), stride, pad);
    if (b.size() != g.filters) {
        throw DimensionError("conv2d bias " + shape_string(b.shape()) + " does not match " + std::to_string(g.filters) +
                             " filters");
    }
    const std::size_t plane = g.out_plane();
    const std::size_t patch = g.patch_size();
    Tensor out({g.batch, g.filters, g.out_h, g.out_w});
    std::vector<double> col(patch * plane);
    for (std::size_t n = 0; n < g.batch; ++n) {
        im2col(x.raw() + n * g.in_channels * g.in_h * g.in_w, g, col.data());
        double* o = out.raw() + n * g.filters * plane;
        for (std::size_t f = 0; f < g.filters; ++f) {
            std::fill(o + f * plane, o + (f + 1) * plane, b[f]);
        }
        gemm_nn(g.filters, plane, patch, w.raw(), col.data(), o, true);
    }
    return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout, std::size_t stride, std::size_t pad,
                            bool need_dx) {
    const auto g = Conv2dGeometry::make(x.shape(), w.shape(), stride, pad);
    const std::size_t plane = g.out_plane();
    const std::size_t patch = g.patch_size();
    Conv2dGrads grads{need_dx ? Tensor(x.shape()) : Tensor{}, Tensor(w.shape()), Tensor({g.filters})};
    std::vector<double> col(patch * plane);
    std::vector<double> dcol(need_dx ? patch * plane : 0);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* go = dout.raw() + n * g.filters * plane;
        for (std::size_t f = 0; f < g.filters; ++f) {
            double s = 0.0;
            for (std::size_t p = 0; p < plane; ++p) s += go[f * plane + p];
            grads.db[f] += s;
        }
        im2col(x.raw() + n * g.in_channels * g.in_h * g.in_w, g, col.data());
        gemm_nt(g.filters, patch, plane, go, col.data(), grads.dw.raw(), true);
        if (need_dx) {
            gemm_tn(patch, plane, g.filters, w.raw(), go, dcol.data(), false);
            col2im(dcol.data(), g, grads.dx.raw() + n * g.in_channels * g.in_h * g.in_w);
        }
    }
    return grads;
}

MaxPoolResult maxpool2d_forward(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
    require_rank(x, 4, "maxpool2d");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t oh = pool_out_size(h, kernel, stride, pad);
    const std::size_t ow = pool_out_size(wd, kernel, stride, pad);
    MaxPoolResult r{Tensor({n, c, oh, ow}), std::vector<std::size_t>(n * c * oh * ow)};
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * wd;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t best_idx = 0;
                bool found = false;
                for (std::size_t ki = 0; ki < kernel; ++ki) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ki) - static_cast<std::ptrdiff_t>(pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t kj = 0; kj < kernel; ++kj) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * stride + kj) - static_cast<std::ptrdiff_t>(pad);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                        const std::size_t idx = base + static_cast<std::size_t>(iy) * wd + static_cast<std::size_t>(ix);
                        if (!found || x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                            found = true;
                        }
                    }
                }
                r.out[o] = best;
                r.argmax[o] = best_idx;
            }
        }
    }
    return r;
}

Tensor maxpool2d_backward(const Tensor& dout, std::span<const std::size_t> argmax, const Shape& input_shape) {
    Tensor dx(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        dx[argmax[o]] += dout[o];
    }
    return dx;
}

Tensor lrn_forward(const Tensor& x, const LrnParams& p, std::vector<double>& denom) {
    require_rank(x, 4, "local_response_norm");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t before = p.size / 2, after = (p.size - 1) / 2;
    const double coeff = p.alpha / static_cast<double>(p.size);
    Tensor y(x.shape());
    denom.assign(x.size(), 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = b * c * hw;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t lo = ch >= before ? ch - before : 0;
            const std::size_t hi = std::min(c - 1, ch + after);
            for (std::size_t s = 0; s < hw; ++s) {
                double acc = 0.0;
                for (std::size_t j = lo; j <= hi; ++j) {
                    const double v = x[base + j * hw + s];
                    acc += v * v;
                }
                const std::size_t idx = base + ch * hw + s;
                denom[idx] = p.k + coeff * acc;
                y[idx] = x[idx] * std::pow(denom[idx], -p.beta);
            }
        }
    }
    return y;
}

Tensor lrn_backward(const Tensor& x, const Tensor& dout, std::span<const double> denom, const LrnParams& p) {
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const std::size_t before = p.size / 2, after = (p.size - 1) / 2;
    const double coeff = 2.0 * p.alpha * p.beta / static_cast<double>(p.size);
    // t_i = g_i * x_i * D_i^(-beta-1); channel j receives t_i from every i whose window contains j.
    std::vector<double> t(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        t[i] = dout[i] * x[i] * std::pow(denom[i], -p.beta - 1.0);
    }
    Tensor dx(x.shape());
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t base = b * c * hw;
        for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t lo = ch >= after ? ch - after : 0;
            const std::size_t hi = std::min(c - 1, ch + before);
            for (std::size_t s = 0; s < hw; ++s) {
                const std::size_t idx = base + ch * hw + s;
                double acc = 0.0;
                for (std::size_t i = lo; i <= hi; ++i) acc += t[base + i * hw + s];
                dx[idx] = dout[idx] * std::pow(denom[idx], -p.beta) - coeff * x[idx] * acc;
            }
        }
    }
    return dx;
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "resize_bilinear");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (out_h == h && out_w == w) return x;
    struct Tap {
        std::size_t i0, i1;
        double w0, w1;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t d = 0; d < out; ++d) {
            double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
            if (src < 0.0) src = 0.0;
            auto i0 = static_cast<std::size_t>(src);
            if (i0 > in - 1) i0 = in - 1;
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            const double l1 = src - static_cast<double>(i0);
            t[d] = {i0, i1, 1.0 - l1, l1};
        }
        return t;
    };
    const auto ty = taps(h, out_h);
    const auto tx = taps(w, out_w);
    Tensor y({n, c, out_h, out_w});
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const double* src = x.raw() + plane * h * w;
        double* dst = y.raw() + plane * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const Tap& b = tx[ox];
                const double top = b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1];
                const double bot = b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1];
                dst[oy * out_w + ox] = a.w0 * top + a.w1 * bot;
            }
        }
    }
    return y;
}

Tensor pad_to(const Tensor& x, std::size_t size) {
    require_rank(x, 4, "pad_to");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (size < h || size < w) {
        throw DimensionError("cannot pad " + shape_string(x.shape()) + " down to " + std::to_string(size));
    }
    const std::size_t top = (size - h) / 2, left = (size - w) / 2;
    Tensor y({n, c, size, size});
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t r = 0; r < h; ++r) {
            const double* src = x.raw() + (plane * h + r) * w;
            std::copy(src, src + w, y.raw() + (plane * size + r + top) * size + left);
        }
    }
    return y;
}

Tensor softmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor p(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.raw() + i * c;
        double* out = p.raw() + i * c;
        const double m = *std::max_element(z, z + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[j] = std::exp(z[j] - m);
            total += out[j];
        }
        for (std::size_t j = 0; j < c; ++j) out[j] /= total;
    }
    return p;
}

std::vector<double> cross_entropy_per_sample(const Tensor& logits, std::span<const int> targets) {
    require_rank(logits, 2, "cross entropy");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (targets.size() != n) {
        throw DataError("cross entropy got " + std::to_string(targets.size()) + " targets for " + std::to_string(n) +
                        " rows");
    }
    std::vector<double> losses(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= c) {
            throw DataError("target " + std::to_string(t) + " at index " + std::to_string(i) + " outside [0, " +
                            std::to_string(c) + ")");
        }
        const double* z = logits.raw() + i * c;
        const std::size_t top = static_cast<std::size_t>(std::max_element(z, z + c) - z);
        // The max term contributes exactly exp(0) = 1; log1p keeps precision for confident rows.
        double rest = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            if (j != top) rest += std::exp(z[j] - z[top]);
        }
        losses[i] = (z[top] - z[t]) + std::log1p(rest);
    }
    return losses;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    require_rank(logits, 2, "argmax");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.raw() + i * c;
        out[i] = static_cast<int>(std::max_element(z, z + c) - z);
    }
    return out;
}

}  // namespace optbench::kernels
