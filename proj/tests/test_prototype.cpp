#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alen/errors.hpp"
#include "alen/gradcheck.hpp"
#include "alen/kernels.hpp"
#include "alen/prototype.hpp"
#include "helpers.hpp"

using namespace alen;

namespace {

GaussianPrototype proto(Label c, std::vector<double> mean, Matrix cov, double ridge = 0.0) {
    return GaussianPrototype::from_moments(c, std::move(mean), std::move(cov), 10, ridge);
}

Matrix diag(std::vector<double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

/// Two unit-covariance classes at +-a e1, global prototype given explicitly.
PrototypeBank two_class_bank(double a, double k, const GaussianPrototype& global) {
    std::map<Label, GaussianPrototype> per;
    per.emplace(0, proto(0, {a, 0.0}, Matrix::identity(2)));
    per.emplace(1, proto(1, {-a, 0.0}, Matrix::identity(2)));
    return PrototypeBank(std::move(per), global, k, 0.0);
}

}  // namespace

TEST_CASE("prototype: two points give their midpoint") {
    const std::vector<Label> y{0, 0};
    const PrototypeBank b = fit_prototypes(Matrix::from_rows({{1, 2}, {3, -2}}), y);
    CHECK(b.at(0).mean == std::vector<double>{2.0, 0.0});
    CHECK(b.at(0).sample_count == 2);
}

TEST_CASE("prototype: identical rows fall back to the ridge floor") {
    const std::vector<Label> y{0, 0, 0};
    const double ridge = 1e-6;
    const PrototypeBank b = fit_prototypes(Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}}), y, 3.0, ridge);
    const auto& p = b.at(0);
    CHECK(p.cov == Matrix(2, 2, 0.0));
    for (std::size_t i = 0; i < 2; ++i) CHECK(p.chol_lower(i, i) * p.chol_lower(i, i) == doctest::Approx(ridge));
    CHECK(p.chol_lower(1, 0) == 0.0);
}

TEST_CASE("prototype: moments match a brute-force recomputation") {
    Rng rng(21);
    const Matrix x = testing::random_matrix(50, 4, rng, 2.0);
    const std::vector<Label> y(50, 0);
    const PrototypeBank bank = fit_prototypes(x, y);
    const auto& p = bank.at(0);
    for (std::size_t j = 0; j < 4; ++j) {
        double m = 0.0;
        for (std::size_t r = 0; r < 50; ++r) m += x(r, j) / 50.0;
        CHECK(std::abs(p.mean[j] - m) < 1e-10);
    }
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            // two-pass E[xy] - E[x]E[y] form, rescaled to n - 1
            double sxy = 0.0, sx = 0.0, sy = 0.0;
            for (std::size_t r = 0; r < 50; ++r) {
                sxy += x(r, i) * x(r, j);
                sx += x(r, i);
                sy += x(r, j);
            }
            const double c = (sxy - sx * sy / 50.0) / 49.0;
            CHECK(std::abs(p.cov(i, j) - c) < 1e-10);
        }
}

TEST_CASE("prototype: fit is permutation invariant") {
    Rng rng(3);
    const Matrix x = testing::random_matrix(60, 3, rng);
    std::vector<Label> y(60);
    for (std::size_t i = 0; i < 60; ++i) y[i] = static_cast<Label>(i % 3);
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Label> yp;
    for (auto i : perm) yp.push_back(y[i]);
    const PrototypeBank a = fit_prototypes(x, y), b = fit_prototypes(x.select_rows(perm), yp);
    for (Label c : {0, 1, 2, kGlobalPrototype}) {
        const auto& pa = c == kGlobalPrototype ? a.global() : a.at(c);
        const auto& pb = c == kGlobalPrototype ? b.global() : b.at(c);
        for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(pa.mean[j] - pb.mean[j]) < 1e-12);
        CHECK(testing::max_abs_diff(pa.cov, pb.cov) < 1e-12);
    }
}

TEST_CASE("prototype: too few samples names the class") {
    const std::vector<Label> y{0, 0, 4};
    try {
        fit_prototypes(Matrix::from_rows({{1}, {2}, {3}}), y);
        FAIL("expected EstimationError");
    } catch (const EstimationError& e) {
        CHECK(std::string(e.what()).find("class 4") != std::string::npos);
    }
}

TEST_CASE("prototype: mahalanobis examples") {
    const auto p = proto(0, {1.0, -1.0}, Matrix::identity(2));
    CHECK(mahalanobis(p, std::vector<double>{1.0, -1.0}) == 0.0);
    CHECK(mahalanobis(p, std::vector<double>{2.0, -1.0}) == doctest::Approx(1.0).epsilon(1e-15));
    const auto q = proto(0, {0.0, 0.0}, diag({2.0, 0.5}));
    CHECK(mahalanobis(q, std::vector<double>{1.0, 1.0}) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-14));
    CHECK(std::sqrt(2.5) == doctest::Approx(1.58114).epsilon(1e-5));
    CHECK_THROWS_AS(mahalanobis(q, std::vector<double>{1.0}), ShapeError);
}

TEST_CASE("prototype: distance of mean + L z equals |z|") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const Matrix a = testing::random_matrix(12, 5, rng);
        Matrix cov = kernels::reference::matmul_tn(a, a);
        const auto p = proto(0, std::vector<double>(5, 0.3), cov, 1e-3);
        const Matrix z = testing::random_matrix(1, 5, rng);
        std::vector<double> u(5);
        double norm = 0.0;
        for (std::size_t i = 0; i < 5; ++i) {
            u[i] = p.mean[i];
            for (std::size_t k = 0; k <= i; ++k) u[i] += p.chol_lower(i, k) * z(0, k);
            norm += z(0, i) * z(0, i);
        }
        CHECK(std::abs(mahalanobis(p, u) - std::sqrt(norm)) < 1e-8);
    }
}

TEST_CASE("prototype: sampling") {
    SUBCASE("near-degenerate covariance stays at the mean") {
        const auto p = proto(0, {1, 2, 3, 4, 5, 6, 7, 8}, Matrix(8, 8, 0.0), 1e-6);
        Rng rng(1);
        const Matrix s = sample(p, 100, rng);
        for (std::size_t r = 0; r < 100; ++r)
            for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(s(r, j) - p.mean[j]) < 0.01);
    }
    SUBCASE("sample mean converges") {
        const auto p = proto(0, {2.0, -1.0, 0.5}, Matrix::identity(3));
        Rng rng(2);
        const Matrix s = sample(p, 10000, rng);
        for (std::size_t j = 0; j < 3; ++j) {
            double m = 0.0;
            for (std::size_t r = 0; r < s.rows(); ++r) m += s(r, j) / 10000.0;
            CHECK(std::abs(m - p.mean[j]) < 0.05);
        }
    }
    SUBCASE("fixed seed reproduces draws") {
        const auto p = proto(0, {0.0, 1.0}, diag({3.0, 0.2}));
        Rng a(9), b(9);
        CHECK(sample(p, 50, a) == sample(p, 50, b));
    }
}

TEST_CASE("prototype: negative samples satisfy the acceptance predicate") {
    Rng rng(14);
    for (int bank_id = 0; bank_id < 5; ++bank_id) {
        const Matrix x = testing::random_matrix(90, 3, rng);
        std::vector<Label> y(90);
        for (std::size_t i = 0; i < 90; ++i) y[i] = static_cast<Label>(i % 3);
        const PrototypeBank bank = fit_prototypes(x, y, 1.5);
        const NegativeSamples neg = identify_negative_samples(bank, 40, rng, 4000);
        CHECK(neg.labels == std::vector<Label>(neg.samples.rows(), 3));
        for (std::size_t r = 0; r < neg.samples.rows(); ++r) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [c, p] : bank.per_class()) best = std::min(best, mahalanobis(p, neg.samples.row(r)));
            CHECK(best > 1.5);
        }
    }
}

TEST_CASE("prototype: k = 0 accepts the first draws") {
    const auto g = proto(kGlobalPrototype, {0.0, 0.0}, diag({30.0, 1.0}));
    PrototypeBank bank = two_class_bank(5.0, 0.0, g);
    Rng a(4), b(4);
    const NegativeSamples neg = identify_negative_samples(bank, 25, a, 25);
    CHECK(neg.attempts == 25);
    CHECK_FALSE(neg.shortfall());
    CHECK(neg.samples == sample(g, 25, b));
}

TEST_CASE("prototype: acceptance rate is strictly between 0 and 1 for separated classes") {
    Rng rng(30);
    Matrix x(400, 2);
    std::vector<Label> y(400);
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < 400; ++i) {
        y[i] = static_cast<Label>(i % 2);
        x(i, 0) = (y[i] == 0 ? 5.0 : -5.0) + n(rng);
        x(i, 1) = n(rng);
    }
    const PrototypeBank bank = fit_prototypes(x, y, 3.0);
    const NegativeSamples neg = identify_negative_samples(bank, 10000, rng, 10000);
    CHECK(neg.attempts == 10000);
    const double rate = static_cast<double>(neg.labels.size()) / 10000.0;
    CHECK(rate > 0.0);
    CHECK(rate < 1.0);
    CHECK(neg.shortfall());
}

TEST_CASE("prototype: class separability loss examples") {
    const auto g = proto(kGlobalPrototype, {0.0, 0.0}, diag({5.0, 1.0}));
    SUBCASE("single class is always zero") {
        std::map<Label, GaussianPrototype> per;
        per.emplace(0, proto(0, {0.0, 0.0}, Matrix::identity(2)));
        const PrototypeBank bank(per, g, 3.0, 0.0);
        Rng rng(1);
        const std::vector<Label> y(4, 0);
        const auto r = class_separability_loss(bank, testing::random_matrix(4, 2, rng, 10.0), y);
        CHECK(r.loss == 0.0);
        CHECK(r.grad == Matrix(4, 2, 0.0));
    }
    SUBCASE("identical prototypes tie at ln 2") {
        const PrototypeBank bank = two_class_bank(0.0, 3.0, g);
        Rng rng(2);
        const std::vector<Label> y{0, 1, 1};
        CHECK(class_separability_loss(bank, testing::random_matrix(3, 2, rng), y).loss ==
              doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("hand-evaluated log-density gap of 8") {
        const PrototypeBank bank = two_class_bank(2.0, 3.0, g);
        const std::vector<Label> y{0};
        const double expected = -std::log(1.0 / (1.0 + std::exp(-8.0)));
        CHECK(class_separability_loss(bank, Matrix::from_rows({{2.0, 0.0}}), y).loss ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("out-of-distribution label is rejected") {
        const PrototypeBank bank = two_class_bank(2.0, 3.0, g);
        const std::vector<Label> y{2};
        CHECK_THROWS_AS(class_separability_loss(bank, Matrix(1, 2), y), InputError);
    }
}

TEST_CASE("prototype: class separability loss is non-negative and matches finite differences") {
    Rng rng(40);
    for (int t = 0; t < 10; ++t) {
        const Matrix x = testing::random_matrix(60, 3, rng);
        std::vector<Label> y(60);
        for (std::size_t i = 0; i < 60; ++i) y[i] = static_cast<Label>(i % 3);
        const PrototypeBank bank = fit_prototypes(x, y);
        Matrix u = testing::random_matrix(5, 3, rng);
        const std::vector<Label> yu{0, 1, 2, 0, 1};
        const auto r = class_separability_loss(bank, u, yu);
        CHECK(r.loss >= 0.0);
        auto loss = [&] { return class_separability_loss(bank, u, yu).loss; };
        for (std::size_t k = 0; k < u.size(); ++k)
            CHECK(relative_error(r.grad.data()[k], central_difference(loss, u.data()[k])) < 1e-4);
    }
}

TEST_CASE("prototype: bank json round trip") {
    Rng rng(8);
    const Matrix x = testing::random_matrix(40, 4, rng);
    std::vector<Label> y(40);
    for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<Label>(i % 2);
    const PrototypeBank bank = fit_prototypes(x, y, 2.5, 1e-4);
    const PrototypeBank back = bank_from_json(nlohmann::json::parse(bank_to_json(bank).dump()));
    CHECK(back.k_sigma() == 2.5);
    CHECK(back.ridge() == 1e-4);
    CHECK(back.class_count() == 2);
    for (Label c : {0, 1}) {
        CHECK(back.at(c).mean == bank.at(c).mean);
        CHECK(back.at(c).cov == bank.at(c).cov);
        CHECK(back.at(c).chol_lower == bank.at(c).chol_lower);
    }
    CHECK(back.global().mean == bank.global().mean);
    CHECK(back.min_class_distance(x) == bank.min_class_distance(x));
    CHECK_THROWS_AS(bank_from_json(nlohmann::json::object()), ParseError);
}

TEST_CASE("prototype: cholesky rejects indefinite input") {
    CHECK_THROWS_AS(cholesky_lower(Matrix::from_rows({{1, 2}, {2, 1}})), EstimationError);
    CHECK_THROWS_AS(cholesky_lower(Matrix(2, 3)), ShapeError);
    const Matrix l = cholesky_lower(Matrix::from_rows({{4, 2}, {2, 5}}));
    CHECK(l == Matrix::from_rows({{2, 0}, {1, 2}}));
}
