#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "amsp/amsp.hpp"

using namespace amsp;

TEST(GradCheck, SumHasUnitGradient) {
    Rng rng(1);
    const Tensor x = random_normal(Shape{2, 3, 4, 4}, rng);
    Tape tape;
    const Var in = tape.leaf(x);
    const Tensor g = tape.gradient(sum(in), in);
    for (double v : g.data()) EXPECT_EQ(v, 1.0);
    EXPECT_LT(grad_check([](const auto& v) { return sum(v); }, x), 1e-9);
}

TEST(GradCheck, Silu) {
    Rng rng(2);
    const Tensor x = random_normal(Shape{2, 3, 4, 4}, rng);
    EXPECT_LT(grad_check([](const auto& v) { return sum(activation(v, Activation::silu)); }, x), 1e-5);
}

TEST(GradCheck, Sigmoid) {
    Rng rng(3);
    const Tensor x = random_normal(Shape{1, 2, 3, 3}, rng, 2.0);
    EXPECT_LT(grad_check([](const auto& v) { return sum(activation(v, Activation::sigmoid)); }, x), 1e-5);
}

TEST(GradCheck, CbsSmallShapes) {
    Rng rng(4);
    for (std::size_t c : {1u, 3u, 8u}) {
        const Tensor x = random_normal(Shape{2, c, 5, 4}, rng);
        const ConvParams conv = random_conv(rng, 4, c, 3, 1, 1, 1, true);
        const BNParams bn = random_bn(rng, 4);
        EXPECT_LT(grad_check([&](const auto& v) { return sum(cbs(v, conv, bn)); }, x), 1e-5) << "c=" << c;
    }
}

TEST(GradCheck, StridedGroupedConvWithWeightedObjective) {
    Rng rng(5);
    const Tensor x = random_normal(Shape{2, 4, 6, 5}, rng);
    const ConvParams conv = random_conv(rng, 6, 2, 3, 2, 1, 2, false);
    const Tensor probe = random_normal(conv2d(x, conv).shape(), rng);
    EXPECT_LT(grad_check([&](const auto& v) { return dot(conv2d(v, conv), probe); }, x), 1e-5);
}

TEST(GradCheck, StructuralOps) {
    Rng rng(6);
    const Tensor x = random_normal(Shape{2, 6, 4, 3}, rng);
    const Tensor w_split = random_normal(Shape{2, 2, 4, 3}, rng);
    const Tensor w_gate = random_normal(Shape{2, 6, 4, 3}, rng);
    const Tensor w_strip = random_normal(Shape{2, 6, 7, 1}, rng);
    const std::vector<std::size_t> sizes{2, 4};
    const std::vector<std::size_t> perm{5, 4, 0, 1, 3, 2};
    const std::vector<std::size_t> hw{4, 3};
    auto f = [&](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        auto parts = split_channels(gather_channels(v, perm), sizes);
        auto pools = strip_pools(v);
        const V col = reshape(pools.v_w, Shape{2, 6, 3, 1});
        const V strip = concat_height(std::vector<V>{pools.v_h, col});
        auto halves = split_height(strip, hw);
        const V gate = activation(outer_hw(halves[0], halves[1]), Activation::sigmoid);
        return add(add(dot(parts[0], w_split), dot(mul(gate, v), w_gate)), dot(strip, w_strip));
    };
    EXPECT_LT(grad_check(f, x), 1e-5);
}

TEST(GradCheck, RejectsEpsOutsideRange) {
    const Tensor x(Shape{1, 1, 1, 1}, {1.0});
    auto f = [](const auto& v) { return sum(v); };
    EXPECT_THROW((void)grad_check(f, x, 1e-3), ContractError);
    EXPECT_THROW((void)grad_check(f, x, 1e-9), ContractError);
}

TEST(Tape, UnusedInputGetsZeroGradient) {
    Tape tape;
    const Var a = tape.leaf(Tensor(Shape{1, 2, 2, 2}, 1.0));
    const Var b = tape.leaf(Tensor(Shape{1, 2, 2, 2}, 3.0));
    const Var out = sum(activation(a, Activation::silu));
    const Tensor gb = tape.gradient(out, b);
    EXPECT_EQ(gb.shape(), b.shape());
    for (double v : gb.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, ReplayIsDeterministic) {
    Rng rng(7);
    const Tensor x = random_normal(Shape{2, 4, 5, 5}, rng);
    const ConvParams conv = random_conv(rng, 4, 4, 3, 1, 1, 1, true);
    const BNParams bn = random_bn(rng, 4);
    Tape tape;
    const Var in = tape.leaf(x);
    const Var out = sum(cbs(in, conv, bn));
    const Tensor g1 = tape.gradient(out, in);
    const Tensor g2 = tape.gradient(out, in);
    EXPECT_EQ(g1, g2);
}

TEST(Tape, GradientRequiresScalarOutput) {
    Tape tape;
    const Var a = tape.leaf(Tensor(Shape{1, 1, 2, 2}, 1.0));
    EXPECT_THROW((void)tape.gradient(a, a), ContractError);
}

TEST(Tape, NonFiniteValueNamesTheOperation) {
    Tape tape;
    const Var a = tape.leaf(Tensor(Shape{1, 1, 1, 2}, {1e308, 1e308}));
    try {
        (void)scale(a, 10.0);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
    }
}

TEST(GradCheck, NonFiniteIntermediateIsDiagnosed) {
    const Tensor x(Shape{1, 1, 1, 1}, {std::numeric_limits<double>::infinity()});
    EXPECT_THROW((void)grad_check([](const auto& v) { return sum(v); }, x), NonFiniteError);
}
