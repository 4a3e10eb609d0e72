#include <doctest.h>

#include <cmath>

#include "alen/adam.hpp"
#include "alen/errors.hpp"
#include "alen/loss.hpp"
#include "helpers.hpp"

using namespace alen;

TEST_CASE("loss: uniform logits give ln C") {
    const std::vector<Label> y{0, 3, 2};
    CHECK(softmax_cross_entropy(Matrix(3, 4, 0.7), y).loss == doctest::Approx(std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("loss: saturated correct prediction") {
    const std::vector<Label> y{1};
    CHECK(softmax_cross_entropy(Matrix::from_rows({{0, 1e4, 0}}), y).loss < 1e-6);
}

TEST_CASE("loss: hand-evaluated three-logit case") {
    const std::vector<Label> y{2};
    const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(softmax_cross_entropy(Matrix::from_rows({{1, 2, 3}}), y).loss == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("loss: gradient rows sum to zero") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix logits = testing::random_matrix(8, 5, rng, 5.0);
        std::vector<Label> y(8);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<Label>(rng() % 5);
        const Matrix g = softmax_cross_entropy(logits, y).grad;
        for (std::size_t r = 0; r < g.rows(); ++r) {
            double s = 0.0;
            for (double v : g.row(r)) s += v;
            CHECK(std::abs(s) < 1e-10);
        }
    }
}

TEST_CASE("loss: softmax and argmax") {
    const Matrix p = softmax(Matrix::from_rows({{0, std::log(3.0)}}));
    CHECK(p(0, 0) == doctest::Approx(0.25));
    CHECK(p(0, 1) == doctest::Approx(0.75));
    CHECK(argmax_rows(Matrix::from_rows({{1, 5, 2}, {9, 0, 9}})) == std::vector<Label>{1, 0});
}

TEST_CASE("loss: errors") {
    const std::vector<Label> bad{3}, neg{-1}, two{0, 1};
    CHECK_THROWS_AS(softmax_cross_entropy(Matrix(1, 3), bad), InputError);
    CHECK_THROWS_AS(softmax_cross_entropy(Matrix(1, 3), neg), InputError);
    CHECK_THROWS_AS(softmax_cross_entropy(Matrix(1, 3), two), ShapeError);
}

namespace {

Network scalar_net() {
    Network net({LayerSpec::dense(1, 1)});
    net.param("L0.weight").values = {0.5};
    return net;
}

Gradients grads_of(const Network& net, double w, double b) {
    Gradients g = net.zero_gradients();
    g.arrays[0][0] = w;
    g.arrays[1][0] = b;
    return g;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Network net = scalar_net();
    AdamState s(net);
    const auto before = net.parameter_hash();
    for (int i = 0; i < 3; ++i) adam_step(net, s, net.zero_gradients());
    CHECK(net.parameter_hash() == before);
}

TEST_CASE("adam: first step moves by about lr") {
    Network net = scalar_net();
    AdamState s(net);
    adam_step(net, s, grads_of(net, 10.0, -3.0));
    const AdamConfig c;
    // mhat = g, vhat = g^2 after bias correction
    CHECK(net.param("L0.weight").values[0] == doctest::Approx(0.5 - c.lr * 10.0 / (10.0 + c.eps)).epsilon(1e-15));
    CHECK(net.param("L0.bias").values[0] == doctest::Approx(c.lr * 3.0 / (3.0 + c.eps)).epsilon(1e-15));
    CHECK(std::abs(net.param("L0.weight").values[0] - 0.5) == doctest::Approx(c.lr).epsilon(1e-6));
}

TEST_CASE("adam: second step against a hand-rolled recurrence") {
    Network net = scalar_net();
    AdamState s(net);
    const double g1 = 2.0, g2 = -0.5, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    adam_step(net, s, grads_of(net, g1, 0.0));
    adam_step(net, s, grads_of(net, g2, 0.0));
    double m = 0.0, v = 0.0, w = 0.5;
    const double gs[2] = {g1, g2};
    for (int t = 1; t <= 2; ++t) {
        m = b1 * m + (1 - b1) * gs[t - 1];
        v = b2 * v + (1 - b2) * gs[t - 1] * gs[t - 1];
        w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    }
    CHECK(std::abs(net.param("L0.weight").values[0] - w) < 1e-12);
    CHECK(s.step() == 2);
}

TEST_CASE("adam: signed updates") {
    Rng rng(8);
    Network base({LayerSpec::dense(3, 2), LayerSpec::batch_norm(2)}, rng);
    Gradients g = base.zero_gradients();
    for (auto& a : g.arrays)
        for (double& v : a) v = std::normal_distribution<double>(0.0, 1.0)(rng);
    AdamState warm(base);
    apply_signed_update(base, g, warm, +1);

    Network plus = base, minus = base, plain = base;
    AdamState sp = warm, sm = warm, sa = warm;
    const ParamDelta dp = apply_signed_update(plus, g, sp, +1);
    const ParamDelta dm = apply_signed_update(minus, g, sm, -1);
    adam_step(plain, sa, g);
    CHECK(plus.parameter_hash() == plain.parameter_hash());
    CHECK(dp == dm);
    for (std::size_t p = 0; p < base.params().size(); ++p)
        for (std::size_t k = 0; k < base.params()[p].values.size(); ++k) {
            const double b = base.params()[p].values[k];
            CHECK(plus.params()[p].values[k] == b + dp[p][k]);
            CHECK(minus.params()[p].values[k] == b + (-1.0 * dp[p][k]));
        }

    // +1 then -1 with frozen moments returns to the start
    Network round = base;
    AdamState a = warm, b = warm;
    apply_signed_update(round, g, a, +1);
    apply_signed_update(round, g, b, -1);
    for (std::size_t p = 0; p < base.params().size(); ++p)
        for (std::size_t k = 0; k < base.params()[p].values.size(); ++k)
            CHECK(std::abs(round.params()[p].values[k] - base.params()[p].values[k]) < 1e-12);

    // running statistics are never touched by the optimizer
    CHECK(dp[4] == std::vector<double>(2, 0.0));
    CHECK(dp[5] == std::vector<double>(2, 0.0));
    CHECK_THROWS_AS(apply_signed_update(round, g, a, 0), InputError);
}

TEST_CASE("adam: shape mismatch") {
    Network net = scalar_net();
    AdamState s(net);
    Gradients g = net.zero_gradients();
    g.arrays[0].push_back(1.0);
    CHECK_THROWS_AS(adam_step(net, s, g), ShapeError);
    Network other({LayerSpec::dense(2, 2)});
    CHECK_THROWS_AS(adam_step(net, s, other.zero_gradients()), ShapeError);
}
