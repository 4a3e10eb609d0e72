#include <doctest.h>

#include <cmath>

#include "alen/errors.hpp"
#include "alen/gradcheck.hpp"
#include "alen/nn.hpp"
#include "helpers.hpp"

using namespace alen;

TEST_CASE("nn: empty network is the identity") {
    Network net;
    const Matrix x = Matrix::from_rows({{1, -2}, {3, 4}});
    CHECK(net.forward(x, Mode::Train) == x);
    CHECK(net.predict(x) == x);
    CHECK(net.backward(x).input_grad == x);
}

TEST_CASE("nn: elu forward") {
    Network net({LayerSpec::elu(3)});
    const Matrix y = net.forward(Matrix::from_rows({{0, 1, -1}}), Mode::Eval);
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 1) == 1.0);
    CHECK(y(0, 2) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
}

TEST_CASE("nn: gradient reversal") {
    Rng rng(5);
    const Matrix x = testing::random_matrix(4, 3, rng);
    const Matrix g = testing::random_matrix(4, 3, rng);
    for (double lambda : {1.0, 0.0, 0.37}) {
        Network net({LayerSpec::grad_reverse(3, lambda)});
        CHECK(net.forward(x, Mode::Train) == x);
        const Matrix back = net.backward(g).input_grad;
        for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.data()[i] == -lambda * g.data()[i]);
    }
}

TEST_CASE("nn: dense layer computes x W + b") {
    Network net({LayerSpec::dense(2, 1)});
    net.param("L0.weight").values = {2.0, -1.0};
    net.param("L0.bias").values = {0.5};
    const Matrix y = net.forward(Matrix::from_rows({{3, 4}}), Mode::Eval);
    CHECK(y(0, 0) == 2.5);
}

TEST_CASE("nn: batch norm normalizes each feature in train mode") {
    Rng rng(9);
    Network net({LayerSpec::batch_norm(5)});
    // output variance is var / (var + eps), so keep var well above 10
    Matrix x = testing::random_matrix(32, 5, rng, 10.0);
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, 2) += 10.0;
    const Matrix y = net.forward(x, Mode::Train);
    for (std::size_t c = 0; c < 5; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < y.rows(); ++r) mean += y(r, c);
        mean /= static_cast<double>(y.rows());
        for (std::size_t r = 0; r < y.rows(); ++r) var += (y(r, c) - mean) * (y(r, c) - mean);
        var /= static_cast<double>(y.rows());
        CHECK(std::abs(mean) < 1e-8);
        CHECK(std::abs(var - 1.0) < 1e-6);
    }
}

TEST_CASE("nn: batch norm running statistics move by the momentum") {
    Network net({LayerSpec::batch_norm(1)});
    net.forward(Matrix::from_rows({{1}, {3}}), Mode::Train);
    CHECK(net.param("L0.running_mean").values[0] == doctest::Approx(0.1 * 2.0));
    // unbiased batch variance 2
    CHECK(net.param("L0.running_var").values[0] == doctest::Approx(0.9 + 0.1 * 2.0));
}

TEST_CASE("nn: predict is read-only and matches eval forward") {
    Rng rng(2);
    Network net({LayerSpec::dense(3, 4), LayerSpec::elu(4), LayerSpec::batch_norm(4)}, rng);
    const Matrix x = testing::random_matrix(6, 3, rng);
    net.forward(x, Mode::Train);
    const auto hash = net.parameter_hash();
    const Matrix p = net.predict(x);
    CHECK(net.parameter_hash() == hash);
    CHECK(net.forward(x, Mode::Eval) == p);
    CHECK(net.parameter_hash() == hash);
}

TEST_CASE("nn: errors") {
    Rng rng(1);
    Network net({LayerSpec::dense(3, 2)}, rng);
    CHECK_THROWS_AS(net.backward(Matrix(1, 2)), StateError);
    CHECK_THROWS_AS(net.forward(Matrix(1, 4), Mode::Train), ShapeError);
    net.forward(Matrix(2, 3), Mode::Train);
    CHECK_THROWS_AS(net.backward(Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(Network({LayerSpec::dense(3, 2), LayerSpec::elu(3)}), ShapeError);
    Matrix inf(1, 3, 0.0);
    inf(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(net.forward(inf, Mode::Train), NumericError);
}

TEST_CASE("nn: every layer kind and small compositions pass finite differences") {
    Rng rng(42);
    const std::vector<std::vector<LayerSpec>> stacks = {
        {LayerSpec::dense(3, 2)},
        {LayerSpec::elu(3)},
        {LayerSpec::batch_norm(3)},
        {LayerSpec::grad_reverse(3, 0.5)},
        {LayerSpec::dense(3, 4), LayerSpec::elu(4)},
        {LayerSpec::dense(3, 4), LayerSpec::batch_norm(4), LayerSpec::dense(4, 2)},
        {LayerSpec::dense(3, 4), LayerSpec::elu(4), LayerSpec::grad_reverse(4, 1.0)},
    };
    for (std::size_t seed = 0; seed < 20; ++seed)
        for (const auto& layers : stacks) {
            Network net(layers, rng);
            for (Mode mode : {Mode::Train, Mode::Eval}) {
                const auto e = check_network_gradients(net, testing::random_matrix(5, 3, rng), mode, rng, "stack");
                CHECK(e.max_rel_error < kGradCheckTolerance);
                CHECK(e.checked > 0);
            }
        }
}

TEST_CASE("nn: fixed seed gives identical initialization") {
    Rng a(77), b(77);
    const std::vector<LayerSpec> layers{LayerSpec::dense(4, 8), LayerSpec::elu(8), LayerSpec::dense(8, 2)};
    CHECK(Network(layers, a).parameter_hash() == Network(layers, b).parameter_hash());
}
