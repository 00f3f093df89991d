#include <gtest/gtest.h>

#include "food/ops.hpp"
#include "food/rng.hpp"

#include "gradcheck.hpp"

using namespace food;
using food::testing::random_tensor;

TEST(Conv2d, IdentityKernel) {
    TensorF x = TensorF::filled({1, 3, 3}, 1.0f);
    TensorF w = TensorF::from_data({1, 1, 1, 1}, {1.0f});
    TensorF b = TensorF::zeros({1});
    TensorF y = conv2d(x, w, b, 1, 0);
    EXPECT_EQ(y.shape(), (Shape{1, 3, 3}));
    for (float v : y.data()) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(Conv2d, EncoderStageShape) {
    // 3x64x128, 16 kernels 3x3, stride 2, pad 1 -> 16x32x64
    TensorF x = TensorF::zeros({3, 64, 128});
    TensorF w = TensorF::zeros({16, 3, 3, 3});
    TensorF b = TensorF::zeros({16});
    EXPECT_EQ(conv2d(x, w, b, 2, 1).shape(), (Shape{16, 32, 64}));

    TensorF xb = TensorF::zeros({4, 3, 64, 128});
    EXPECT_EQ(conv2d(xb, w, b, 2, 1).shape(), (Shape{4, 16, 32, 64}));
}

TEST(Conv2d, HandComputedValues) {
    // 1x2x2 input [[1,2],[3,4]], 1x1x2x2 kernel [[1,0],[0,1]], stride 1, pad 0
    TensorF x = TensorF::from_data({1, 2, 2}, {1, 2, 3, 4});
    TensorF w = TensorF::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
    TensorF b = TensorF::from_data({1}, {0.5f});
    TensorF y = conv2d(x, w, b, 1, 0);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_FLOAT_EQ(y.data()[0], 1.0f + 4.0f + 0.5f);
}

TEST(Conv2d, ShapeErrors) {
    TensorF x = TensorF::zeros({3, 4, 4});
    TensorF w = TensorF::zeros({8, 2, 3, 3}); // C_in mismatch
    TensorF b = TensorF::zeros({8});
    EXPECT_THROW(conv2d(x, w, b, 1, 1), ShapeError);
    TensorF w2 = TensorF::zeros({8, 3, 9, 9}); // kernel exceeds padded input
    TensorF b2 = TensorF::zeros({8});
    EXPECT_THROW(conv2d(x, w2, b2, 1, 1), ShapeError);
    TensorF bad_bias = TensorF::zeros({7});
    TensorF w3 = TensorF::zeros({8, 3, 3, 3});
    EXPECT_THROW(conv2d(x, w3, bad_bias, 1, 1), ShapeError);
}

TEST(ConvTranspose, SinglePixelBroadcast) {
    const float v = 2.75f;
    TensorF x = TensorF::from_data({1, 1, 1}, {v});
    TensorF w = TensorF::filled({1, 1, 2, 2}, 1.0f);
    TensorF b = TensorF::zeros({1});
    TensorF y = conv2d_transpose(x, w, b, 2, 0);
    EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
    for (float out : y.data()) EXPECT_FLOAT_EQ(out, v);
}

TEST(ConvTranspose, DecoderStageShape) {
    // 16x32x64, kernel [16,3,3,3], stride 2, pad 1, output_padding 1 -> 3x64x128
    TensorF x = TensorF::zeros({16, 32, 64});
    TensorF w = TensorF::zeros({16, 3, 3, 3});
    TensorF b = TensorF::zeros({3});
    EXPECT_EQ(conv2d_transpose(x, w, b, 2, 1, 1).shape(), (Shape{3, 64, 128}));
}

TEST(ConvTranspose, InvalidOutputPad) {
    TensorF x = TensorF::zeros({1, 2, 2});
    TensorF w = TensorF::zeros({1, 1, 3, 3});
    TensorF b = TensorF::zeros({1});
    EXPECT_THROW(conv2d_transpose(x, w, b, 2, 1, 2), ShapeError);
}

// conv2d_transpose(g; W) must equal the input gradient of conv2d under
// upstream gradient g with the same weight tensor.
TEST(ConvTranspose, AdjointOfConv2d) {
    Rng rng(5);
    TensorD x = random_tensor({2, 6, 8}, rng, true);
    TensorD w = random_tensor({3, 2, 3, 3}, rng, true);
    TensorD b = TensorD::zeros({3});
    TensorD y = conv2d(x, w, b, 2, 1); // [3,3,4]

    TensorD g = random_tensor(y.shape(), rng, false);
    sum(mul(y, g)).backward(); // seeds upstream gradient g into y

    TensorD zero_bias = TensorD::zeros({2});
    // same W reinterpreted as [C_in=3, C_out=2, kh, kw]; output_pad recovers 6x8
    TensorD adj = conv2d_transpose(g, w, zero_bias, 2, 1, 1, 1);
    ASSERT_EQ(adj.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        EXPECT_NEAR(adj.data()[i], x.grad()[i], 1e-12);
    }
}

TEST(Linear, IdentityWeight) {
    TensorF x = TensorF::from_data({1, 3}, {1, 2, 3});
    TensorF w = TensorF::from_data({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    TensorF b = TensorF::zeros({3});
    TensorF y = linear(x, w, b);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_FLOAT_EQ(y.data()[i], x.data()[i]);
}

TEST(Linear, HandMatrixProduct) {
    // x=[1,2], W=[[1,1],[0,1]], b=[0,0] -> [3,2]
    TensorF x = TensorF::from_data({1, 2}, {1, 2});
    TensorF w = TensorF::from_data({2, 2}, {1, 1, 0, 1});
    TensorF b = TensorF::zeros({2});
    TensorF y = linear(x, w, b);
    EXPECT_FLOAT_EQ(y.data()[0], 3.0f);
    EXPECT_FLOAT_EQ(y.data()[1], 2.0f);
}

TEST(Linear, InnerDimMismatch) {
    TensorF x = TensorF::zeros({1, 3});
    TensorF w = TensorF::zeros({2, 4});
    TensorF b = TensorF::zeros({2});
    EXPECT_THROW(linear(x, w, b), ShapeError);
}

TEST(Activations, Values) {
    TensorF x = TensorF::from_data({3}, {-1.0f, 2.0f, -2.0f});
    TensorF r = relu(x);
    EXPECT_FLOAT_EQ(r.data()[0], 0.0f);
    EXPECT_FLOAT_EQ(r.data()[1], 2.0f);
    TensorF l = leaky_relu(x, 0.1f);
    EXPECT_FLOAT_EQ(l.data()[2], -0.2f);
    EXPECT_FLOAT_EQ(l.data()[1], 2.0f);
}

TEST(AvgPool, BlockMean) {
    TensorF x = TensorF::from_data({1, 2, 2}, {1, 2, 3, 4});
    TensorF y = avg_pool2d(x, 2);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_FLOAT_EQ(y.data()[0], 2.5f);
}

TEST(AvgPool, ConstantPreserved) {
    TensorF x = TensorF::filled({2, 4, 4}, 3.25f);
    TensorF y = avg_pool2d(x, 2);
    for (float v : y.data()) EXPECT_FLOAT_EQ(v, 3.25f);
}

TEST(AvgPool, RequiresDivisibleDims) {
    TensorF x = TensorF::zeros({1, 5, 4});
    EXPECT_THROW(avg_pool2d(x, 2), ShapeError);
}

TEST(Mse, Values) {
    TensorF a = TensorF::from_data({3}, {1, 2, 3});
    EXPECT_FLOAT_EQ(mse(a, a).item(), 0.0f);
    TensorF p = TensorF::zeros({2});
    TensorF t = TensorF::filled({2}, 2.0f);
    EXPECT_FLOAT_EQ(mse(p, t).item(), 4.0f);
    EXPECT_THROW(mse(p, a), ShapeError);
}

TEST(Mse, NonNegativeOnRandomInputs) {
    Rng rng(9);
    for (int i = 0; i < 50; ++i) {
        TensorD a = random_tensor({7}, rng, false, -5.0, 5.0);
        TensorD b = random_tensor({7}, rng, false, -5.0, 5.0);
        EXPECT_GE(mse(a, b).item(), 0.0);
        EXPECT_EQ(mse(a, a).item(), 0.0);
    }
}

// Identical inputs produce bit-identical results across repeated evaluation.
TEST(Determinism, ForwardBackwardBitIdentical) {
    Rng rng(21);
    TensorD x0 = random_tensor({2, 3, 8, 8}, rng, false);
    TensorD w0 = random_tensor({4, 3, 3, 3}, rng, false);
    TensorD b0 = random_tensor({4}, rng, false);

    auto run = [&](std::vector<double>& grad_out) {
        TensorD x = TensorD::from_data(x0.shape(), x0.data(), false);
        TensorD w = TensorD::from_data(w0.shape(), w0.data(), true);
        TensorD b = TensorD::from_data(b0.shape(), b0.data(), true);
        TensorD y = leaky_relu(conv2d(x, w, b, 2, 1), 0.2);
        TensorD loss = mse(y, TensorD::zeros(y.shape()));
        loss.backward();
        grad_out = w.grad();
        return loss.item();
    };
    std::vector<double> g1, g2;
    const double l1 = run(g1);
    const double l2 = run(g2);
    EXPECT_EQ(l1, l2);
    ASSERT_EQ(g1.size(), g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i) ASSERT_EQ(g1[i], g2[i]);
}
