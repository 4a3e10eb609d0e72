#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include <json.hpp>

#include "alen/loss.hpp"
#include "alen/matrix.hpp"
#include "alen/nn.hpp"

namespace alen {

inline constexpr Label kGlobalPrototype = -1;
inline constexpr double kDefaultKSigma = 3.0;
inline constexpr double kDefaultRidge = 1e-6;

/// Multivariate Gaussian N(mean, cov) over latent features. `chol_lower`
/// factors cov + ridge * I.
struct GaussianPrototype {
    Label class_id = kGlobalPrototype;
    std::vector<double> mean;
    Matrix cov;
    Matrix chol_lower;
    std::size_t sample_count = 0;
    double ridge = kDefaultRidge;

    std::size_t dim() const noexcept { return mean.size(); }
    /// sum(log diag(L)) * 2
    double log_det() const;

    /// Builds the prototype from moments; throws EstimationError if cov + ridge*I is not PD.
    static GaussianPrototype from_moments(Label class_id, std::vector<double> mean, Matrix cov,
                                          std::size_t sample_count, double ridge);
};

/// Per-class prototypes plus the global prototype fitted on all rows.
class PrototypeBank {
public:
    PrototypeBank() = default;
    PrototypeBank(std::map<Label, GaussianPrototype> per_class, GaussianPrototype global, double k_sigma,
                  double ridge);

    std::size_t latent_dim() const noexcept { return global_.dim(); }
    std::size_t class_count() const noexcept { return per_class_.size(); }
    /// Pseudo-label for OOD negatives: one past the last real class.
    Label ood_label() const noexcept { return static_cast<Label>(per_class_.size()); }
    double k_sigma() const noexcept { return k_sigma_; }
    double ridge() const noexcept { return ridge_; }
    void set_k_sigma(double k) { k_sigma_ = k; }

    const std::map<Label, GaussianPrototype>& per_class() const noexcept { return per_class_; }
    const GaussianPrototype& at(Label c) const;
    bool contains(Label c) const { return per_class_.contains(c); }
    const GaussianPrototype& global() const noexcept { return global_; }

    /// Row-wise min over classes of the Mahalanobis distance.
    std::vector<double> min_class_distance(const Matrix& u) const;

private:
    std::map<Label, GaussianPrototype> per_class_;
    GaussianPrototype global_;
    double k_sigma_ = kDefaultKSigma;
    double ridge_ = kDefaultRidge;
};

/// Sample mean and (n-1)-normalized covariance per class and over all rows.
PrototypeBank fit_prototypes(const Matrix& features, std::span<const Label> labels,
                             double k_sigma = kDefaultKSigma, double ridge = kDefaultRidge);

/// sqrt((u - mean)^T (cov + ridge I)^{-1} (u - mean)) through the Cholesky factor.
double mahalanobis(const GaussianPrototype& proto, std::span<const double> u);
std::vector<double> mahalanobis_rows(const GaussianPrototype& proto, const Matrix& u);

/// Gaussian log-density at u (including the -d/2 log 2pi constant).
double log_density(const GaussianPrototype& proto, std::span<const double> u);

/// Rows mean + L z with z ~ N(0, I).
Matrix sample(const GaussianPrototype& proto, std::size_t n, Rng& rng);

struct NegativeSamples {
    Matrix samples;
    std::vector<Label> labels;  // all == bank.ood_label()
    std::size_t attempts = 0;
    double k_sigma = 0.0;
    bool shortfall() const noexcept { return requested > labels.size(); }
    std::size_t requested = 0;
};

/// Rejection-samples the global prototype, keeping draws whose minimum
/// class Mahalanobis distance exceeds bank.k_sigma(). Returns fewer than
/// n_neg rows (shortfall() true) if max_attempts runs out.
NegativeSamples identify_negative_samples(const PrototypeBank& bank, std::size_t n_neg, Rng& rng,
                                          std::size_t max_attempts);

/// Row-averaged -log softmax over class log-densities; prototypes are constants.
LossAndGrad class_separability_loss(const PrototypeBank& bank, const Matrix& features,
                                    std::span<const Label> labels);

nlohmann::json bank_to_json(const PrototypeBank& bank);
PrototypeBank bank_from_json(const nlohmann::json& doc);

/// Lower Cholesky factor of a symmetric positive definite matrix.
/// Throws EstimationError when a pivot is not positive.
Matrix cholesky_lower(const Matrix& spd);

}  // namespace alen
