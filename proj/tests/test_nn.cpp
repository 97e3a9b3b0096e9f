#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "flad/data.hpp"
#include "flad/nn.hpp"

using namespace flad;

namespace {

Tensor random_matrix(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t = Tensor::matrix(n, d);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Naive scalar forward pass over the flattened [W (out x in), b] layout.
std::vector<double> oracle_forward(const Model& m, std::span<const double> x) {
    const auto& ls = m.config.layer_sizes;
    std::vector<double> a(x.begin(), x.end());
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < ls.size(); ++l) {
        std::vector<double> z(ls[l + 1]);
        for (std::size_t o = 0; o < ls[l + 1]; ++o) {
            double s = m.params[off + ls[l] * ls[l + 1] + o];
            for (std::size_t i = 0; i < ls[l]; ++i) s += m.params[off + o * ls[l] + i] * a[i];
            const bool last = l + 2 == ls.size();
            if (!last) s = m.config.hidden_activation == Activation::relu ? std::max(0.0, s) : std::tanh(s);
            z[o] = s;
        }
        off += ls[l] * ls[l + 1] + ls[l + 1];
        a = std::move(z);
    }
    return a;
}

}  // namespace

TEST(Model, ParamCountAndGlorotInit) {
    const MlpConfig cfg{{16, 32, 2}, Activation::relu, OutputHead::softmax_logits};
    EXPECT_EQ(param_count(cfg), 16u * 32 + 32 + 32 * 2 + 2);
    const Model m = Model::glorot(cfg, 3);
    const double lim0 = std::sqrt(6.0 / 48.0);
    for (std::size_t i = 0; i < 16 * 32; ++i) EXPECT_LE(std::abs(m.params[i]), lim0);
    for (std::size_t i = 16 * 32; i < 16 * 32 + 32; ++i) EXPECT_EQ(m.params[i], 0.0);
    EXPECT_EQ(m.params, Model::glorot(cfg, 3).params);
    EXPECT_NE(m.params, Model::glorot(cfg, 4).params);
}

TEST(Model, ForwardMatchesScalarOracle) {
    for (auto act : {Activation::relu, Activation::tanh}) {
        const Model m = Model::glorot({{5, 7, 4, 3}, act, OutputHead::linear}, 11);
        const Tensor x = random_matrix(6, 5, 12);
        const Tensor z = logits(m, x);
        for (std::size_t r = 0; r < 6; ++r) {
            const auto ref = oracle_forward(m, x.row(r));
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(z(r, c), ref[c], 1e-12);
        }
    }
}

TEST(Model, SoftmaxRowsSumToOne) {
    const Model m = Model::glorot({{4, 8, 3}, Activation::relu, OutputHead::softmax_logits}, 1);
    const Tensor p = forward(m, random_matrix(5, 4, 2));
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (double v : p.row(r)) {
            EXPECT_GT(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Loss, CrossEntropyKnownValuesAndStability) {
    EXPECT_NEAR(cross_entropy_loss(Tensor({1, 2}, {0, 0}), Labels{0}), std::log(2.0), 1e-15);
    const double big = cross_entropy_loss(Tensor({1, 2}, {1000, 0}), Labels{1});
    EXPECT_NEAR(big, 1000.0, 1e-9);
    EXPECT_THROW(cross_entropy_loss(Tensor({1, 2}, {0, 0}), Labels{2}), InvalidLabelError);
    EXPECT_THROW(cross_entropy_loss(Tensor({2, 2}), Labels{0}), ShapeError);
}

TEST(Loss, MseKnownValue) {
    EXPECT_DOUBLE_EQ(mse_loss(Tensor({1, 2}, {1, 0}), Tensor({1, 2}, {0, 0})), 0.5);
    EXPECT_THROW(mse_loss(Tensor({1, 2}), Tensor({2, 1})), ShapeError);
}

TEST(Backward, MatchesCentralDifferences) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Model m = Model::glorot({{6, 9, 4}, Activation::tanh, OutputHead::softmax_logits}, s);
        const Tensor x = random_matrix(7, 6, 100 + s);
        const Labels y{0, 1, 2, 3, 0, 1, 2};
        const ParamVector bp = backward(m, x, y);
        const ParamVector fd = finite_diff_gradient(m, x, y, 1e-6);
        EXPECT_LT(l2_norm(bp - fd) / l2_norm(fd), 1e-6);
    }
    const Model reg = Model::glorot({{3, 5, 2}, Activation::relu, OutputHead::linear}, 9);
    const Tensor x = random_matrix(4, 3, 1), t = random_matrix(4, 2, 2);
    const ParamVector fd = finite_diff_gradient(reg, x, t, 1e-6);
    EXPECT_LT(l2_norm(backward(reg, x, t) - fd) / l2_norm(fd), 1e-6);
}

TEST(Backward, FiniteDifferenceStepIsBounded) {
    const Model m = Model::zeros({{2, 2}, Activation::relu, OutputHead::softmax_logits});
    const Tensor x({1, 2}, {0.5, 0.5});
    EXPECT_THROW(finite_diff_gradient(m, x, Labels{0}, 1e-9), InvalidSpecError);
    EXPECT_THROW(finite_diff_gradient(m, x, Labels{0}, 1e-2), InvalidSpecError);
}

TEST(Autoencoder, ShapesParamsAndGradient) {
    EXPECT_THROW(Autoencoder::make(8, {16}, 8, 0), InvalidSpecError);
    auto ae = Autoencoder::make(8, {12}, 3, 4);
    const Tensor x = random_matrix(5, 8, 5);
    EXPECT_EQ(reconstruct(ae, x).shape(), x.shape());
    ParamVector p = ae.params();
    p *= 0.5;
    ae.set_params(p);
    EXPECT_EQ(ae.params(), p);
    const ParamVector fd = finite_diff_gradient(ae, x, 1e-6);
    EXPECT_LT(l2_norm(backward(ae, x) - fd) / l2_norm(fd), 1e-6);
}

TEST(Autoencoder, ZeroWeightsReconstructZero) {
    auto ae = Autoencoder::make(4, {6}, 2, 1);
    ae.set_params(ParamVector(ae.params().size()));
    const Tensor x({2, 4}, std::vector<double>(8, 0.5));
    EXPECT_DOUBLE_EQ(loss_value(ae, x), 0.25);
}

TEST(Optimizer, SgdStepIsExact) {
    auto st = OptimizerState::make(OptimizerKind::sgd, 2);
    const ParamVector out = optimizer_step(st, ParamVector(std::vector<double>{1, 2}),
                                           ParamVector(std::vector<double>{0.5, -1}), 0.1);
    EXPECT_EQ(out, ParamVector(std::vector<double>({1 - 0.1 * 0.5, 2 + 0.1 * 1})));
    EXPECT_EQ(st.t, 1u);
    EXPECT_THROW(optimizer_step(st, ParamVector(2), ParamVector(2), -1.0), InvalidSpecError);
}

TEST(Optimizer, AdamFirstStepIsSignedLearningRate) {
    auto st = OptimizerState::make(OptimizerKind::adam, 3);
    const ParamVector g(std::vector<double>{0.3, -2.0, 1e-3});
    const ParamVector out = optimizer_step(st, ParamVector(3), g, 0.01);
    for (std::size_t i = 0; i < 3; ++i) {
        const double expected = -0.01 * g[i] / (std::abs(g[i]) + 1e-8);
        EXPECT_NEAR(out[i], expected, 1e-15);
    }
}

TEST(Training, DeterministicAndReducesLoss) {
    const Dataset ds = gen_synthetic(2, 100, 4, 0.8, 0.1, 3);
    const Model m0 = Model::glorot({{4, 8, 2}, Activation::relu, OutputHead::softmax_logits}, 1);
    const Model a = train_local(m0, ds, 0.01, 16, 5, 42);
    const Model b = train_local(m0, ds, 0.01, 16, 5, 42);
    EXPECT_EQ(a.params, b.params);
    EXPECT_LT(loss_value(a, ds.features, ds.labels), loss_value(m0, ds.features, ds.labels));
    EXPECT_EQ(train_local(m0, ds, 0.01, 16, 0, 42).params, m0.params);
    EXPECT_THROW(train_local(m0, Dataset{Tensor({0, 4}), {}, 2}, 0.01, 16, 1, 0), EmptyDataError);
}

TEST(Training, SingleFullBatchSgdStepEqualsGradientStep) {
    const Dataset ds = gen_synthetic(2, 10, 4, 0.8, 0.1, 3);
    const Model m0 = Model::glorot({{4, 2}, Activation::relu, OutputHead::softmax_logits}, 1);
    const Model a = train_local(m0, ds, 0.5, 64, 1, 7, OptimizerKind::sgd);
    const ParamVector expected = m0.params - backward(m0, ds.features, ds.labels) * 0.5;
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(a.params[i], expected[i], 1e-14);
}

TEST(Training, AutoencoderLearnsStructure) {
    const Dataset ds = gen_synthetic(2, 100, 8, 0.8, 0.05, 5);
    const auto ae0 = Autoencoder::make(8, {16}, 4, 2);
    const auto ae = train_autoencoder(ae0, ds.features, 0.01, 32, 100, 3);
    EXPECT_LT(loss_value(ae, ds.features), 0.5 * loss_value(ae0, ds.features));
}
