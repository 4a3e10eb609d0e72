#include <doctest.h>

#include "alen/errors.hpp"
#include "alen/metrics.hpp"

using namespace alen;

namespace {

AccuracyMatrix matrix(std::initializer_list<std::vector<double>> rows) {
    AccuracyMatrix m;
    for (const auto& r : rows) m.append_row(r);
    return m;
}

}  // namespace

TEST_CASE("metrics: accuracy") {
    const std::vector<Label> y{0, 1, 2, 3};
    CHECK(accuracy(y, y) == 1.0);
    CHECK(accuracy(std::vector<Label>{1, 2, 3, 0}, y) == 0.0);
    CHECK(accuracy(std::vector<Label>{0, 1, 2, 0}, y) == 0.75);
    // the OOD slot is never a correct answer
    CHECK(accuracy(std::vector<Label>{4, 1, 2, 3}, y) == 0.75);
    CHECK_THROWS_AS(accuracy(std::vector<Label>{}, std::vector<Label>{}), InputError);
    CHECK_THROWS_AS(accuracy(std::vector<Label>{0}, y), ShapeError);
}

TEST_CASE("metrics: forgetting") {
    CHECK(forgetting(matrix({{0.8}, {0.8, 0.8}, {0.8, 0.8, 0.8}})) == 0.0);
    CHECK(forgetting(matrix({{0.9}, {0.8, 0.6}})) == doctest::Approx(10.0));
    CHECK(forgetting(matrix({{0.7}, {0.75, 0.6}})) == doctest::Approx(-5.0));
    // mean over every past domain
    CHECK(forgetting(matrix({{0.9}, {0.9, 0.8}, {0.7, 0.8, 0.5}})) == doctest::Approx((20.0 + 0.0) / 2.0));
    CHECK_THROWS_AS(forgetting(matrix({{0.9}})), InputError);
}

TEST_CASE("metrics: average accuracy and matrix rules") {
    const AccuracyMatrix m = matrix({{0.9}, {0.5, 0.7}});
    CHECK(average_accuracy(m) == doctest::Approx(0.6));
    CHECK(m.at(1, 0) == 0.5);
    CHECK_THROWS_AS(m.at(0, 1), RangeError);
    CHECK_THROWS_AS(m.at(2, 0), RangeError);
    AccuracyMatrix bad;
    CHECK_THROWS_AS(bad.append_row({0.5, 0.5}), ShapeError);
    CHECK_THROWS_AS(bad.append_row({1.5}), InputError);
    CHECK_THROWS_AS(average_accuracy(bad), InputError);
}
