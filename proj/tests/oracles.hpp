#pragma once

// Reference implementations used as test oracles. They are written straight
// from the definitions, loop by loop, and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec matmul(const Vec& a, const Vec& b, std::size_t m, std::size_t k, std::size_t n) {
    Vec c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            long double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += static_cast<long double>(a[i * k + p]) * b[p * n + j];
            c[i * n + j] = static_cast<double>(s);
        }
    return c;
}

// Direct convolution, NCHW, zero padding.
inline Vec conv2d(const Vec& x, const Vec& w, const Vec& b, std::size_t n, std::size_t c, std::size_t h,
                  std::size_t wd, std::size_t f, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad,
                  std::size_t& oh, std::size_t& ow) {
    oh = (h + 2 * pad - kh) / stride + 1;
    ow = (wd + 2 * pad - kw) / stride + 1;
    Vec out(n * f * oh * ow);
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t fi = 0; fi < f; ++fi)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    long double s = b[fi];
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t i = 0; i < kh; ++i)
                            for (std::size_t j = 0; j < kw; ++j) {
                                const long long iy = static_cast<long long>(y * stride + i) - static_cast<long long>(pad);
                                const long long ix = static_cast<long long>(xx * stride + j) - static_cast<long long>(pad);
                                if (iy < 0 || ix < 0 || iy >= static_cast<long long>(h) ||
                                    ix >= static_cast<long long>(wd))
                                    continue;
                                s += static_cast<long double>(x[((in * c + ci) * h + iy) * wd + ix]) *
                                     w[((fi * c + ci) * kh + i) * kw + j];
                            }
                    out[((in * f + fi) * oh + y) * ow + xx] = static_cast<double>(s);
                }
    return out;
}

inline double log_sum_exp(const double* z, std::size_t n) {
    const double mx = *std::max_element(z, z + n);
    long double s = 0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(static_cast<long double>(z[i]) - mx);
    return mx + static_cast<double>(std::log(s));
}

inline double cross_entropy(const Vec& logits, const std::vector<int>& y, std::size_t classes) {
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double* z = logits.data() + i * classes;
        s += log_sum_exp(z, classes) - z[y[i]];
    }
    return static_cast<double>(s / y.size());
}

// Straight-line optimizers over a flat parameter vector, one struct per rule.
struct Sgd {
    double lr, mu;
    Vec m;
    void step(Vec& th, const Vec& g) {
        if (m.empty()) m.assign(th.size(), 0.0);
        for (std::size_t i = 0; i < th.size(); ++i) {
            m[i] = mu * m[i] + g[i];
            th[i] = th[i] - lr * m[i];
        }
    }
};

struct Adam {
    double lr, b1, b2, eps;
    Vec m, v;
    int t = 0;
    void step(Vec& th, const Vec& g) {
        if (m.empty()) m.assign(th.size(), 0.0), v.assign(th.size(), 0.0);
        ++t;
        for (std::size_t i = 0; i < th.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            th[i] = th[i] - lr * mh / (std::sqrt(vh) + eps);
        }
    }
};

struct AdaBelief {
    double lr, b1, b2, eps;
    Vec m, s;
    int t = 0;
    void step(Vec& th, const Vec& g) {
        if (m.empty()) m.assign(th.size(), 0.0), s.assign(th.size(), 0.0);
        ++t;
        for (std::size_t i = 0; i < th.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            const double d = g[i] - m[i];
            s[i] = b2 * s[i] + (1 - b2) * d * d + eps;
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double sh = s[i] / (1 - std::pow(b2, t));
            th[i] = th[i] - lr * mh / (std::sqrt(sh) + eps);
        }
    }
};

struct Padam {
    double lr, b1, b2, eps, p;
    Vec m, v, vmax;
    int t = 0;
    void step(Vec& th, const Vec& g) {
        if (m.empty()) m.assign(th.size(), 0.0), v.assign(th.size(), 0.0), vmax.assign(th.size(), 0.0);
        ++t;
        for (std::size_t i = 0; i < th.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            vmax[i] = std::max(vmax[i], vh);
            th[i] = th[i] - lr * mh / (std::pow(vmax[i], p) + eps);
        }
    }
};

// AMSGrad with bias-corrected moments and a running max of the corrected v.
struct AmsGrad {
    double lr, b1, b2, eps;
    Vec m, v, vmax;
    int t = 0;
    void step(Vec& th, const Vec& g) {
        if (m.empty()) m.assign(th.size(), 0.0), v.assign(th.size(), 0.0), vmax.assign(th.size(), 0.0);
        ++t;
        for (std::size_t i = 0; i < th.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(b1, t));
            const double vh = v[i] / (1 - std::pow(b2, t));
            vmax[i] = std::max(vmax[i], vh);
            th[i] = th[i] - lr * mh / (std::sqrt(vmax[i]) + eps);
        }
    }
};

// Fraction of positions where argmax matches; micro-F1 from pooled counts.
inline double micro_f1_by_counts(const std::vector<int>& pred, const std::vector<int>& target, int classes) {
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (int c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (pred[i] == c && target[i] == c) ++tp;
            if (pred[i] == c && target[i] != c) ++fp;
            if (pred[i] != c && target[i] == c) ++fn;
        }
    }
    if (tp == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return 2 * precision * recall / (precision + recall);
}

// Big-endian IDX builders, byte by byte.
inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::vector<std::uint8_t> idx_images(const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                                            std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> out = {0x00, 0x00, 0x08, 0x03};
    put_be32(out, count);
    put_be32(out, rows);
    put_be32(out, cols);
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

inline std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out = {0x00, 0x00, 0x08, 0x01};
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

}  // namespace oracle
