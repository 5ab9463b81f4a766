#include <gtest/gtest.h>

#include <cmath>

#include "adaterm/gradcheck.hpp"
#include "adaterm/models.hpp"

using namespace adaterm;

namespace {

DenseArray random_batch(Rng& r, std::size_t n, std::size_t d) {
    DenseArray x({n, d});
    for (double& v : x.data()) v = r.uniform(-1.0, 1.0);
    return x;
}

double batch_loss(const MlpModel& m, const DenseArray& x, const DenseArray& y) {
    auto [yhat, tape] = forward(m, x);
    return mse_loss(yhat, y).first;
}

}  // namespace

TEST(Mlp, RegressionLayout) {
    const auto sizes = MlpModel::regression_layout();
    MlpModel m(sizes);
    EXPECT_EQ(m.layer_count(), 5u);
    EXPECT_EQ(m.parameter_count(), 2u * 50 + 3u * (50 * 50 + 50) + 51u);
}

TEST(Mlp, ZeroWeightsGiveBias) {
    MlpModel m({2, 4, 1});
    m.mutable_layer(1).bias[0] = 0.25;
    Rng r(1);
    auto [y, tape] = forward(m, random_batch(r, 5, 2));
    for (double v : y.data()) EXPECT_EQ(v, 0.25);
}

TEST(Mlp, HandComputedForward) {
    MlpModel m({1, 2, 1});
    auto& l0 = m.mutable_layer(0);
    l0.weight = DenseArray({2, 1}, {1.0, -1.0});
    l0.bias = DenseArray::vector({0.0, 0.5});
    auto& l1 = m.mutable_layer(1);
    l1.weight = DenseArray({1, 2}, {2.0, 3.0});
    l1.bias = DenseArray::vector({-1.0});
    auto [y, tape] = forward(m, DenseArray({2, 1}, {0.25, -1.0}));
    // x = 0.25: h = (0.25, 0.25) -> 2*0.25 + 3*0.25 - 1 = 0.25; x = -1: h = (0, 1.5) -> 4.5 - 1 = 3.5
    EXPECT_DOUBLE_EQ(y[0], 0.25);
    EXPECT_DOUBLE_EQ(y[1], 3.5);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
    Rng r(11);
    auto model = MlpModel::he_uniform({3, 6, 5, 2}, r);
    const auto x = random_batch(r, 7, 3);
    const auto y = random_batch(r, 7, 2);
    auto [yhat, tape] = forward(model, x);
    const auto grads = backward(model, tape, mse_loss(yhat, y).second);
    ASSERT_EQ(grads.size(), 6u);
    double worst = 0.0;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        for (int which = 0; which < 2; ++which) {
            const std::size_t n = which ? model.layer(l).bias.size() : model.layer(l).weight.size();
            for (std::size_t i = 0; i < n; ++i) {
                auto f = [&](double value) {
                    MlpModel copy = model;
                    auto& layer = copy.mutable_layer(l);
                    (which ? layer.bias : layer.weight)[i] = value;
                    return batch_loss(copy, x, y);
                };
                const double at = which ? model.layer(l).bias[i] : model.layer(l).weight[i];
                const double fd = central_difference(f, at, 1e-4);
                worst = std::max(worst, relative_error(grads[2 * l + which][i], fd, 1e-6));
            }
        }
    }
    EXPECT_LT(worst, 1e-6);
}

TEST(Mlp, ReluSubgradientZeroAtKink) {
    MlpModel m({1, 1, 1});
    m.mutable_layer(0).weight = DenseArray({1, 1}, {1.0});
    m.mutable_layer(1).weight = DenseArray({1, 1}, {1.0});
    auto [y, tape] = forward(m, DenseArray({1, 1}, {0.0}));
    const auto grads = backward(m, tape, DenseArray({1, 1}, {1.0}));
    EXPECT_EQ(grads[0][0], 0.0);
    EXPECT_EQ(grads[1][0], 0.0);
}

TEST(Mlp, TapeGuards) {
    Rng r(2);
    auto m = MlpModel::he_uniform({2, 3, 1}, r);
    const auto x = random_batch(r, 4, 2);
    auto [y, tape] = forward(m, x);
    const DenseArray dl({4, 1}, 1.0);
    backward(m, tape, dl);
    EXPECT_THROW(backward(m, tape, dl), ParameterError);
    auto [y2, tape2] = forward(m, x);
    m.mutable_layer(0).bias[0] += 1.0;
    EXPECT_THROW(backward(m, tape2, dl), ParameterError);
    auto [y3, tape3] = forward(m, x);
    EXPECT_THROW(backward(m, tape3, DenseArray({3, 1})), ParameterError);
}

TEST(Mlp, RejectsBadInput) {
    MlpModel m({2, 3, 1});
    EXPECT_THROW(forward(m, DenseArray({4, 3})), ParameterError);
    EXPECT_THROW(forward(MlpModel(), DenseArray({1, 1})), ParameterError);
    DenseArray x({1, 2});
    x[0] = NAN;
    EXPECT_THROW(forward(m, x), NumericalError);
    EXPECT_THROW(MlpModel(std::vector<std::size_t>{3}), ParameterError);
}

TEST(Mse, ValueAndGradient) {
    const DenseArray a({2, 1}, {1.0, 2.0}), b({2, 1}, {0.0, 4.0});
    const auto [loss, grad] = mse_loss(a, b);
    EXPECT_DOUBLE_EQ(loss, 2.5);
    EXPECT_DOUBLE_EQ(grad[0], 1.0);
    EXPECT_DOUBLE_EQ(grad[1], -2.0);
    EXPECT_THROW(mse_loss(a, DenseArray({1, 2})), ParameterError);
}

TEST(Checkpoint, ModelRoundTrip) {
    Rng r(3);
    const auto m = MlpModel::he_uniform(MlpModel::regression_layout(), r);
    const auto bytes = serialize_model(m);
    const auto back = deserialize_model(bytes);
    ASSERT_EQ(back.layer_count(), m.layer_count());
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        EXPECT_EQ(back.layer(l).weight, m.layer(l).weight);
        EXPECT_EQ(back.layer(l).bias, m.layer(l).bias);
    }
    auto bad = bytes;
    bad[4] = 9;
    EXPECT_THROW(deserialize_model(bad), ParameterError);
}
