#include <gtest/gtest.h>

#include <cmath>

#include "optbench/errors.hpp"
#include "optbench/kernels.hpp"
#include "optbench/random.hpp"
#include "oracles.hpp"

using namespace optbench;
using namespace optbench::kernels;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Tensor t(std::move(s));
    for (double& v : t.data()) v = rng.uniform(-1, 1);
    return t;
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, Identity) {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    EXPECT_EQ(matmul(a, Tensor::from_rows({{1, 0}, {0, 1}})), a);
}

TEST(Matmul, HandValues) {
    const Tensor c = matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{5, 6}, {7, 8}}));
    EXPECT_EQ(c, Tensor::from_rows({{19, 22}, {43, 50}}));
}

TEST(Matmul, ZeroAnnihilates) {
    const Tensor c = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, 1));
    EXPECT_EQ(c, Tensor::zeros({2, 4}));
}

TEST(Matmul, ShapeMismatchThrows) { EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError); }

class GemmShapes : public ::testing::TestWithParam<std::tuple<std::size_t, std::size_t, std::size_t>> {};

TEST_P(GemmShapes, AllVariantsMatchOracle) {
    const auto [m, k, n] = GetParam();
    const Tensor a = random_tensor({m, k}, 11), b = random_tensor({k, n}, 12);
    const auto ref = oracle::matmul(to_vec(a), to_vec(b), m, k, n);
    std::vector<double> c(m * n, 0.0);
    gemm_nn(m, n, k, a.raw(), b.raw(), c.data(), false);
    for (std::size_t i = 0; i < c.size(); ++i) ASSERT_NEAR(c[i], ref[i], 1e-12) << i;

    // A * B via B^T and A^T inputs.
    std::vector<double> bt(k * n), at(m * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
    std::vector<double> c2(m * n, 1.0), c3(m * n, 1.0);
    gemm_nt(m, n, k, a.raw(), bt.data(), c2.data(), true);
    gemm_tn(m, n, k, at.data(), b.raw(), c3.data(), true);
    for (std::size_t i = 0; i < c.size(); ++i) {
        ASSERT_NEAR(c2[i], ref[i] + 1.0, 1e-12);
        ASSERT_NEAR(c3[i], ref[i] + 1.0, 1e-12);
    }
}

INSTANTIATE_TEST_SUITE_P(Kernels, GemmShapes,
                         ::testing::Values(std::make_tuple(1, 1, 1), std::make_tuple(3, 5, 7),
                                           std::make_tuple(8, 16, 16), std::make_tuple(17, 33, 19),
                                           std::make_tuple(40, 300, 70), std::make_tuple(2, 700, 45)));

TEST(Gemm, RowResultIndependentOfRowCount) {
    const Tensor a = random_tensor({13, 77}, 3), b = random_tensor({77, 41}, 4);
    const Tensor full = matmul(a, b);
    for (std::size_t rows : {1u, 2u, 5u, 8u, 9u}) {
        Tensor head({rows, 77});
        std::copy(a.raw(), a.raw() + rows * 77, head.raw());
        const Tensor part = matmul(head, b);
        for (std::size_t i = 0; i < part.size(); ++i) ASSERT_EQ(part[i], full[i]) << rows;
    }
}

TEST(Conv2d, SumOfNineOnes) {
    const Tensor out = conv2d_forward(Tensor::ones({1, 1, 3, 3}), Tensor::ones({1, 1, 3, 3}), Tensor({1}, 0.5), 1, 0);
    EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(out[0], 9.5);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
    const Tensor x = random_tensor({2, 1, 5, 5}, 9);
    Tensor w({1, 1, 3, 3});
    w[4] = 1.0;
    EXPECT_EQ(conv2d_forward(x, w, Tensor({1}), 1, 1), x);
}

TEST(Conv2d, ZeroKernelZeroOutput) {
    const Tensor out = conv2d_forward(random_tensor({1, 2, 4, 4}, 1), Tensor({3, 2, 3, 3}), Tensor({3}), 1, 1);
    EXPECT_EQ(out, Tensor::zeros({1, 3, 4, 4}));
}

TEST(Conv2d, MatchesDirectConvolution) {
    const Tensor x = random_tensor({2, 3, 9, 9}, 5), w = random_tensor({4, 3, 3, 3}, 6), b = random_tensor({4}, 7);
    std::size_t oh = 0, ow = 0;
    const auto ref = oracle::conv2d(to_vec(x), to_vec(w), to_vec(b), 2, 3, 9, 9, 4, 3, 3, 2, 1, oh, ow);
    const Tensor out = conv2d_forward(x, w, b, 2, 1);
    ASSERT_EQ(out.shape(), (Shape{2, 4, oh, ow}));
    for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], ref[i], 1e-12);
}

TEST(Conv2d, NonIntegerOutputSizeIsConfigError) {
    EXPECT_EQ(conv_out_size(227, 11, 4, 0), 55u);
    EXPECT_THROW(conv_out_size(224, 11, 4, 0), ConfigError);
    EXPECT_THROW(conv_out_size(3, 5, 1, 0), ConfigError);
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
    EXPECT_THROW(conv2d_forward(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1, 0), DimensionError);
}

TEST(MaxPool, SingleWindow) {
    const auto r = maxpool2d_forward(Tensor({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4}), 2, 2);
    EXPECT_EQ(r.out, Tensor({1, 1, 1, 1}, 4.0));
}

TEST(MaxPool, RowHandValues) {
    // Windows are square, so a single-row input cannot hold a 2x2 window.
    EXPECT_THROW(maxpool2d_forward(Tensor({1, 1, 1, 4}, std::vector<double>{1, 3, 2, 4}), 2, 2), ConfigError);
    const auto r2 = maxpool2d_forward(Tensor({1, 1, 2, 4}, std::vector<double>{1, 3, 2, 4, 0, 0, 0, 0}), 2, 2);
    EXPECT_EQ(r2.out, Tensor({1, 1, 1, 2}, std::vector<double>{3, 4}));
}

TEST(MaxPool, TiesGoToFirstElement) {
    const Tensor x({1, 1, 4, 4}, 2.0);
    const auto r = maxpool2d_forward(x, 2, 2);
    EXPECT_EQ(r.out, Tensor({1, 1, 2, 2}, 2.0));
    const Tensor dx = maxpool2d_backward(Tensor({1, 1, 2, 2}, 1.0), r.argmax, x.shape());
    const std::vector<double> expect = {1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
    EXPECT_EQ(dx, Tensor({1, 1, 4, 4}, expect));
}

TEST(MaxPool, PaddingNeverWins) {
    const auto r = maxpool2d_forward(Tensor({1, 1, 2, 2}, -5.0), 3, 2, 1);
    EXPECT_EQ(r.out, Tensor({1, 1, 1, 1}, -5.0));
}

TEST(MaxPool, FloorMode) {
    EXPECT_EQ(pool_out_size(13, 3, 2, 0), 6u);
    EXPECT_EQ(pool_out_size(55, 3, 2, 0), 27u);
    EXPECT_THROW(pool_out_size(2, 3, 1, 0), ConfigError);
}

TEST(CrossEntropy, UniformLogits) {
    const auto l = cross_entropy_per_sample(Tensor({1, 47}, 0.3), std::vector<int>{5});
    EXPECT_NEAR(l[0], std::log(47.0), 1e-14);
    EXPECT_NEAR(l[0], 3.8501, 1e-4);
}

TEST(CrossEntropy, ConfidentCorrect) {
    const auto l = cross_entropy_per_sample(Tensor::from_rows({{10, -10}}), std::vector<int>{0});
    // log(1 + e^-20)
    EXPECT_NEAR(l[0], std::log1p(std::exp(-20.0)), 1e-24);
    EXPECT_NEAR(l[0], 2.06e-9, 1e-11);
}

TEST(CrossEntropy, MatchesLogSumExpOracle) {
    const Tensor z = random_tensor({6, 9}, 77);
    const std::vector<int> y = {0, 8, 3, 3, 1, 7};
    const auto l = cross_entropy_per_sample(z, y);
    double mean = 0;
    for (double v : l) mean += v;
    EXPECT_NEAR(mean / 6, oracle::cross_entropy(to_vec(z), y, 9), 1e-14);
}

TEST(CrossEntropy, BadTargetIsDataError) {
    EXPECT_THROW(cross_entropy_per_sample(Tensor({1, 3}), std::vector<int>{3}), DataError);
    EXPECT_THROW(cross_entropy_per_sample(Tensor({1, 3}), std::vector<int>{-1}), DataError);
}

TEST(Softmax, RowsSumToOne) {
    const Tensor p = softmax_rows(random_tensor({4, 10}, 2));
    for (std::size_t r = 0; r < 4; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 10; ++c) s += p[r * 10 + c];
        EXPECT_NEAR(s, 1.0, 1e-15);
    }
}

TEST(Argmax, LowestIndexOnTies) {
    EXPECT_EQ(argmax_rows(Tensor::from_rows({{1, 3, 3}, {2, 2, 2}})), (std::vector<int>{1, 0}));
}

TEST(Resize, ConstantImageStaysConstant) {
    const Tensor y = resize_bilinear(Tensor({1, 1, 28, 28}, 0.7), 227, 227);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 227, 227}));
    for (double v : y.data()) ASSERT_NEAR(v, 0.7, 1e-15);
}

TEST(Resize, SameSizeIsIdentity) {
    const Tensor x = random_tensor({1, 2, 5, 5}, 4);
    const Tensor y = resize_bilinear(x, 5, 5);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-15);
}

TEST(Resize, UpsampleTwoPixels) {
    // Half-pixel centres: output x=0..3 sample source at -0.25, 0.25, 0.75, 1.25 (clamped).
    const Tensor y = resize_bilinear(Tensor({1, 1, 1, 2}, std::vector<double>{0, 1}), 1, 4);
    EXPECT_EQ(y, Tensor({1, 1, 1, 4}, std::vector<double>{0, 0.25, 0.75, 1}));
}

TEST(PadTo, PlacesImageTopLeftBiased) {
    const Tensor y = pad_to(Tensor({1, 1, 2, 2}, 1.0), 5);
    // extra = 3: one row/column before, two after.
    EXPECT_EQ(y[0 * 5 + 0], 0.0);
    EXPECT_EQ(y[1 * 5 + 1], 1.0);
    EXPECT_EQ(y[2 * 5 + 2], 1.0);
    EXPECT_EQ(y[3 * 5 + 3], 0.0);
    EXPECT_THROW(pad_to(Tensor({1, 1, 6, 6}), 5), DimensionError);
}

TEST(Lrn, SingleChannelClosedForm) {
    LrnParams p{1, 1.0, 0.5, 1.0};
    std::vector<double> denom;
    const Tensor y = lrn_forward(Tensor({1, 1, 1, 1}, 2.0), p, denom);
    EXPECT_NEAR(y[0], 2.0 / std::sqrt(1.0 + 4.0), 1e-15);
}
