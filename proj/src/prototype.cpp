#include "alen/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "alen/errors.hpp"
#include "alen/kernels.hpp"

namespace alen {

Matrix cholesky_lower(const Matrix& spd) {
    const std::size_t d = spd.rows();
    if (spd.cols() != d) throw ShapeError("cholesky: matrix is not square");
    Matrix l(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        double diag = spd(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw EstimationError("cholesky: matrix is not positive definite (pivot " + std::to_string(j) + ")");
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < d; ++i) {
            double acc = spd(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            l(i, j) = acc / l(j, j);
        }
    }
    return l;
}

double GaussianPrototype::log_det() const {
    double s = 0.0;
    for (std::size_t i = 0; i < chol_lower.rows(); ++i) s += std::log(chol_lower(i, i));
    return 2.0 * s;
}

GaussianPrototype GaussianPrototype::from_moments(Label class_id, std::vector<double> mean, Matrix cov,
                                                  std::size_t sample_count, double ridge) {
    const std::size_t d = mean.size();
    if (cov.rows() != d || cov.cols() != d) throw ShapeError("prototype: covariance shape mismatch");
    if (ridge < 0.0) throw InputError("prototype: ridge must be non-negative");
    Matrix regularized = cov;
    for (std::size_t i = 0; i < d; ++i) regularized(i, i) += ridge;
    GaussianPrototype p;
    p.class_id = class_id;
    p.mean = std::move(mean);
    p.cov = std::move(cov);
    try {
        p.chol_lower = cholesky_lower(regularized);
    } catch (const EstimationError& e) {
        throw EstimationError("prototype for class " + std::to_string(class_id) + ": " + e.what());
    }
    p.sample_count = sample_count;
    p.ridge = ridge;
    return p;
}

namespace {

GaussianPrototype estimate(Label class_id, const Matrix& features, std::span<const std::size_t> rows,
                           double ridge) {
    const std::size_t d = features.cols();
    const std::size_t n = rows.size();
    if (n < 2)
        throw EstimationError("class " + std::to_string(class_id) + " has " + std::to_string(n) +
                              " sample(s); at least 2 are required");
    std::vector<double> mean(d, 0.0);
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < d; ++j) mean[j] += features(r, j);
    for (double& m : mean) m /= static_cast<double>(n);
    Matrix cov(d, d);
    for (std::size_t r : rows)
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = features(r, i) - mean[i];
            for (std::size_t j = i; j < d; ++j) cov(i, j) += ci * (features(r, j) - mean[j]);
        }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= static_cast<double>(n - 1);
            cov(j, i) = cov(i, j);
        }
    return GaussianPrototype::from_moments(class_id, std::move(mean), std::move(cov), n, ridge);
}

}  // namespace

PrototypeBank::PrototypeBank(std::map<Label, GaussianPrototype> per_class, GaussianPrototype global,
                             double k_sigma, double ridge)
    : per_class_(std::move(per_class)), global_(std::move(global)), k_sigma_(k_sigma), ridge_(ridge) {
    for (const auto& [c, p] : per_class_)
        if (p.dim() != global_.dim()) throw ShapeError("prototype bank: latent dimensions differ");
}

const GaussianPrototype& PrototypeBank::at(Label c) const {
    auto it = per_class_.find(c);
    if (it == per_class_.end()) throw InputError("prototype bank has no class " + std::to_string(c));
    return it->second;
}

std::vector<double> PrototypeBank::min_class_distance(const Matrix& u) const {
    std::vector<double> best(u.rows(), std::numeric_limits<double>::infinity());
    for (const auto& [c, p] : per_class_) {
        const auto d = mahalanobis_rows(p, u);
        for (std::size_t i = 0; i < d.size(); ++i) best[i] = std::min(best[i], d[i]);
    }
    return best;
}

PrototypeBank fit_prototypes(const Matrix& features, std::span<const Label> labels, double k_sigma,
                             double ridge) {
    if (features.rows() != labels.size())
        throw ShapeError("fit_prototypes: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
    std::map<Label, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0) throw InputError("fit_prototypes: negative label");
        members[labels[i]].push_back(i);
    }
    std::map<Label, GaussianPrototype> per_class;
    for (const auto& [c, rows] : members) per_class.emplace(c, estimate(c, features, rows, ridge));
    std::vector<std::size_t> all(features.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return PrototypeBank(std::move(per_class), estimate(kGlobalPrototype, features, all, ridge), k_sigma, ridge);
}

double mahalanobis(const GaussianPrototype& proto, std::span<const double> u) {
    if (u.size() != proto.dim())
        throw ShapeError("mahalanobis: vector has " + std::to_string(u.size()) + " entries, prototype has " +
                         std::to_string(proto.dim()));
    Matrix row(1, u.size(), std::vector<double>(u.begin(), u.end()));
    return mahalanobis_rows(proto, row)[0];
}

std::vector<double> mahalanobis_rows(const GaussianPrototype& proto, const Matrix& u) {
    if (u.cols() != proto.dim()) throw ShapeError("mahalanobis: dimension mismatch");
    auto sq = kernels::squared_row_norms(kernels::whiten_rows(proto.chol_lower, proto.mean, u));
    for (double& v : sq) v = std::sqrt(v);
    return sq;
}

double log_density(const GaussianPrototype& proto, std::span<const double> u) {
    const double m = mahalanobis(proto, u);
    return -0.5 * m * m - 0.5 * proto.log_det() -
           0.5 * static_cast<double>(proto.dim()) * std::log(2.0 * std::numbers::pi);
}

Matrix sample(const GaussianPrototype& proto, std::size_t n, Rng& rng) {
    const std::size_t d = proto.dim();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(n, d);
    std::vector<double> z(d);
    for (std::size_t r = 0; r < n; ++r) {
        for (double& v : z) v = normal(rng);
        for (std::size_t i = 0; i < d; ++i) {
            double acc = proto.mean[i];
            for (std::size_t k = 0; k <= i; ++k) acc += proto.chol_lower(i, k) * z[k];
            out(r, i) = acc;
        }
    }
    return out;
}

NegativeSamples identify_negative_samples(const PrototypeBank& bank, std::size_t n_neg, Rng& rng,
                                          std::size_t max_attempts) {
    if (bank.class_count() == 0) throw InputError("identify_negative_samples: bank has no classes");
    NegativeSamples out;
    out.requested = n_neg;
    out.k_sigma = bank.k_sigma();
    out.samples = Matrix(0, bank.latent_dim());
    std::vector<double> accepted;
    accepted.reserve(n_neg * bank.latent_dim());
    std::size_t kept = 0;
    while (kept < n_neg && out.attempts < max_attempts) {
        const std::size_t chunk = std::min(std::max<std::size_t>(n_neg, 1), max_attempts - out.attempts);
        const Matrix draws = sample(bank.global(), chunk, rng);
        const auto dist = bank.min_class_distance(draws);
        for (std::size_t i = 0; i < chunk && kept < n_neg; ++i) {
            ++out.attempts;
            if (dist[i] > bank.k_sigma()) {
                const auto row = draws.row(i);
                accepted.insert(accepted.end(), row.begin(), row.end());
                ++kept;
            }
        }
    }
    out.samples = Matrix(kept, bank.latent_dim(), std::move(accepted));
    out.labels.assign(kept, bank.ood_label());
    return out;
}

LossAndGrad class_separability_loss(const PrototypeBank& bank, const Matrix& features,
                                    std::span<const Label> labels) {
    if (features.rows() != labels.size()) throw ShapeError("class_separability_loss: label count mismatch");
    if (features.cols() != bank.latent_dim()) throw ShapeError("class_separability_loss: latent width mismatch");
    const std::size_t n = features.rows();
    const std::size_t classes = bank.class_count();
    std::vector<Label> keys;
    for (const auto& [c, p] : bank.per_class()) keys.push_back(c);
    std::vector<std::size_t> target(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = std::find(keys.begin(), keys.end(), labels[i]);
        if (it == keys.end())
            throw InputError("class_separability_loss: label " + std::to_string(labels[i]) +
                             " is not a source class");
        target[i] = static_cast<std::size_t>(it - keys.begin());
    }

    // scores(i, c) = log N(u_i; mu_c, Sigma_c); grad of the score is -Sigma_c^{-1}(u_i - mu_c)
    Matrix scores(n, classes);
    std::vector<Matrix> precision_dirs;
    precision_dirs.reserve(classes);
    const double log2pi = std::log(2.0 * std::numbers::pi);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto& p = bank.at(keys[c]);
        Matrix z = kernels::whiten_rows(p.chol_lower, p.mean, features);
        const auto sq = kernels::squared_row_norms(z);
        const double offset = -0.5 * p.log_det() - 0.5 * static_cast<double>(p.dim()) * log2pi;
        for (std::size_t i = 0; i < n; ++i) scores(i, c) = -0.5 * sq[i] + offset;
        precision_dirs.push_back(kernels::back_substitute_rows(p.chol_lower, z));
    }

    std::vector<Label> local(target.begin(), target.end());
    LossAndGrad ce = softmax_cross_entropy(scores, local);
    LossAndGrad out{ce.loss, Matrix(n, features.cols())};
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < n; ++i) {
            const double w = ce.grad(i, c);
            if (w == 0.0) continue;
            auto g = out.grad.row(i);
            const auto dir = precision_dirs[c].row(i);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] -= w * dir[j];
        }
    return out;
}

namespace {

nlohmann::json proto_to_json(const GaussianPrototype& p) {
    nlohmann::json cov = nlohmann::json::array();
    for (std::size_t i = 0; i < p.cov.rows(); ++i) {
        auto r = p.cov.row(i);
        cov.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"mean", p.mean}, {"cov", cov}, {"sample_count", p.sample_count}};
}

GaussianPrototype proto_from_json(Label id, const nlohmann::json& j, double ridge) {
    auto mean = j.at("mean").get<std::vector<double>>();
    const auto rows = j.at("cov").get<std::vector<std::vector<double>>>();
    Matrix cov(mean.size(), mean.size());
    if (rows.size() != mean.size()) throw ShapeError("prototype json: covariance row count mismatch");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != mean.size()) throw ShapeError("prototype json: ragged covariance");
        std::copy(rows[i].begin(), rows[i].end(), cov.row(i).begin());
    }
    return GaussianPrototype::from_moments(id, std::move(mean), std::move(cov), j.value("sample_count", 0u),
                                           ridge);
}

}  // namespace

nlohmann::json bank_to_json(const PrototypeBank& bank) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [c, p] : bank.per_class()) classes[std::to_string(c)] = proto_to_json(p);
    return {{"latent_dim", bank.latent_dim()}, {"k_sigma", bank.k_sigma()}, {"ridge", bank.ridge()},
            {"classes", classes},              {"global", proto_to_json(bank.global())}};
}

PrototypeBank bank_from_json(const nlohmann::json& doc) {
    try {
        const double ridge = doc.value("ridge", kDefaultRidge);
        std::map<Label, GaussianPrototype> per_class;
        for (const auto& [key, value] : doc.at("classes").items()) {
            const Label c = std::stoi(key);
            per_class.emplace(c, proto_from_json(c, value, ridge));
        }
        PrototypeBank bank(std::move(per_class), proto_from_json(kGlobalPrototype, doc.at("global"), ridge),
                           doc.at("k_sigma").get<double>(), ridge);
        if (bank.latent_dim() != doc.at("latent_dim").get<std::size_t>())
            throw ShapeError("prototype json: latent_dim disagrees with mean length");
        return bank;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("prototype bank: ") + e.what());
    }
}

}  // namespace alen
