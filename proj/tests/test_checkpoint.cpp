#include <doctest.h>

#include <fstream>

#include "alen/checkpoint.hpp"
#include "alen/errors.hpp"
#include "helpers.hpp"

using namespace alen;

TEST_CASE("checkpoint: network and optimizer round trip through a file") {
    Rng rng(12);
    Network net({LayerSpec::dense(3, 4), LayerSpec::elu(4), LayerSpec::batch_norm(4), LayerSpec::grad_reverse(4, 0.3),
                 LayerSpec::dense(4, 2)},
                rng);
    const Matrix x = testing::random_matrix(5, 3, rng);
    net.forward(x, Mode::Train);
    AdamState opt(net);
    adam_step(net, opt, net.backward(testing::random_matrix(5, 2, rng)).grads);

    testing::TempDir dir("ckpt");
    write_json_file(dir.path / "net.json", network_to_json(net, &opt));
    const NetworkCheckpoint back = network_from_json(read_json_file(dir.path / "net.json"));

    CHECK(back.network.layers() == net.layers());
    CHECK(back.network.parameter_hash() == net.parameter_hash());
    CHECK(back.network.predict(x) == net.predict(x));
    REQUIRE(back.optimizer.has_value());
    CHECK(back.optimizer->step() == 1);
    CHECK(back.optimizer->first_moment() == opt.first_moment());
    CHECK(back.optimizer->second_moment() == opt.second_moment());
}

TEST_CASE("checkpoint: optimizer is optional") {
    Network net({LayerSpec::dense(2, 2)});
    CHECK_FALSE(network_from_json(network_to_json(net)).optimizer.has_value());
}

TEST_CASE("checkpoint: malformed documents") {
    Network net({LayerSpec::dense(2, 2)});
    auto doc = network_to_json(net);
    auto wrong_version = doc;
    wrong_version["format_version"] = 99;
    CHECK_THROWS_AS(network_from_json(wrong_version), InputError);
    auto short_param = doc;
    short_param["params"]["L0.bias"] = {1.0};
    CHECK_THROWS_AS(network_from_json(short_param), ShapeError);
    auto missing = doc;
    missing.erase("layers");
    CHECK_THROWS_AS(network_from_json(missing), ParseError);
    auto bad_kind = doc;
    bad_kind["layers"][0]["kind"] = "Conv";
    CHECK_THROWS_AS(network_from_json(bad_kind), InputError);

    testing::TempDir dir("ckpt_bad");
    std::ofstream(dir.path / "broken.json") << "{ not json";
    CHECK_THROWS_AS(read_json_file(dir.path / "broken.json"), ParseError);
    CHECK_THROWS_AS(read_json_file(dir.path / "absent.json"), InputError);
}
