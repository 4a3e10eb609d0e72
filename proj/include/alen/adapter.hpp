#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "alen/adam.hpp"
#include "alen/data.hpp"
#include "alen/foresighted.hpp"
#include "alen/nn.hpp"
#include "alen/prototype.hpp"

namespace alen {

/// Target-side networks: f_t, g_t copied from the source model, plus the
/// domain discriminator d with two outputs (0 = source, 1 = target).
struct TargetModel {
    Network feature_extractor;
    Network classifier;
    Network discriminator;
    std::size_t class_count = 0;

    std::size_t latent_dim() const noexcept { return feature_extractor.output_dim(); }
};

struct AdaptConfig {
    std::size_t n = 64;
    std::size_t max_iters = 2000;
    std::size_t min_iters = 200;
    double convergence_tol = 0.05;
    std::size_t window = 50;
    std::size_t samples_per_class = 16;
    std::uint64_t seed = 0;
    double adversarial_lambda = 1.0;
    bool reset_discriminator = false;
    AdamConfig adam;
    std::size_t discriminator_hidden = 16;

    void validate() const;
};

TargetModel init_from_source(const SourceModel& source, std::size_t discriminator_hidden, Rng& rng);

struct RetentionResult {
    double loss = 0.0;
    Gradients classifier_grads;
    Gradients feature_grads;  // identically zero: latent samples bypass f_t
};

/// Mean CE of g_t on the given prototype draws.
RetentionResult retention_loss_on(TargetModel& model, const Matrix& latents, std::span<const Label> labels);
/// Draws samples_per_class latents from every class prototype and scores them.
RetentionResult retention_loss(TargetModel& model, const PrototypeBank& bank, std::size_t samples_per_class,
                               Rng& rng);

struct ConfusionResult {
    double loss = 0.0;
    double source_term = 0.0;
    double target_term = 0.0;
    double discriminator_accuracy = 0.0;
    Gradients discriminator_grads;
    Gradients feature_grads;
};

/// CE of d on source latents labeled 0 plus CE of d(f_t(x)) labeled 1.
ConfusionResult domain_confusion_loss(TargetModel& model, const Matrix& source_latents,
                                      const Matrix& target_inputs);

/// Draws samples_per_class rows from each class prototype, labels in class order.
struct LabeledLatents {
    Matrix latents;
    std::vector<Label> labels;
};
LabeledLatents sample_class_latents(const PrototypeBank& bank, std::size_t samples_per_class, Rng& rng);

struct AdaptStepRecord {
    std::size_t iter = 0;
    double retention = 0.0;
    double confusion = 0.0;
    double discriminator_accuracy = 0.0;
    /// Descent delta Adam_{d,f_t} produced for f_t; f_t received -lambda times this.
    ParamDelta feature_descent_delta;
};

/// Optimizer state for adapting one increment. Each step performs the
/// retention update on g_t, the descent update on d, and the reversed update
/// on f_t, all from one pair of loss evaluations.
class IncrementAdapter {
public:
    IncrementAdapter(TargetModel& model, const PrototypeBank& bank, AdaptConfig config);

    AdaptStepRecord step(const Matrix& target_batch, Rng& rng);

private:
    TargetModel& model_;
    const PrototypeBank& bank_;
    AdaptConfig config_;
    AdamState classifier_state_;      // Adam over g_t
    AdamState discriminator_state_;   // Adam_{d, f_t}: d part
    AdamState feature_state_;         // Adam_{d, f_t}: f_t part
    std::size_t iter_ = 0;
};

struct AdaptLogRow {
    std::size_t iter = 0;
    double retention = 0.0;
    double confusion = 0.0;
    double discriminator_accuracy = 0.0;
};

struct AdaptResult {
    TargetModel model;
    std::vector<AdaptLogRow> log;
    bool converged = false;
};

/// Adapts to one unlabeled target set. Labels on target_data are ignored.
AdaptResult adapt_increment(TargetModel model, const PrototypeBank& bank, const DomainBatch& target_data,
                            const AdaptConfig& config);

struct StreamResult {
    TargetModel model;
    std::vector<TargetModel> snapshots;
    std::vector<std::vector<AdaptLogRow>> logs;
};

/// Chains adapt_increment over the increments with the bank frozen.
StreamResult adapt_stream(const SourceModel& source, std::span<const DomainBatch> increments,
                          const AdaptConfig& config);

void write_adapt_log_csv(const std::filesystem::path& path, const std::vector<AdaptLogRow>& log);

}  // namespace alen
