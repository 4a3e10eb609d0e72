#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "alen/adam.hpp"
#include "alen/data.hpp"
#include "alen/nn.hpp"
#include "alen/prototype.hpp"

namespace alen {

/// Widths of the dense stand-in for the convolutional trunk and the heads.
struct ArchitectureConfig {
    std::size_t trunk_hidden = 64;
    std::size_t latent_dim = 8;
    std::size_t classifier_hidden = 16;
    std::size_t discriminator_hidden = 16;
};

/// Dense(in, hidden) ELU BN Dense(hidden, latent) ELU Dense(latent, latent) ELU BN
std::vector<LayerSpec> feature_extractor_layers(std::size_t input_dim, const ArchitectureConfig& arch);
/// Dense(latent, hidden) ELU Dense(hidden, outputs)
std::vector<LayerSpec> classifier_layers(std::size_t latent_dim, std::size_t hidden, std::size_t outputs);
std::vector<LayerSpec> discriminator_layers(std::size_t latent_dim, std::size_t hidden);

struct ForesightedConfig {
    std::size_t n_src = 32;
    std::size_t n_neg = 32;
    double k_sigma = kDefaultKSigma;
    std::size_t max_epochs = 100;
    double convergence_tol = 1e-4;
    std::size_t patience = 3;
    std::size_t warmup_epochs = 1;
    std::uint64_t seed = 0;
    bool disable_ls1 = false;
    double ridge = kDefaultRidge;
    std::size_t max_attempts_factor = 50;
    AdamConfig adam;
    ArchitectureConfig arch;

    void validate() const;
};

/// Base model: f_s, g_s (|C_s| + 1 outputs, last one OOD) and the prototypes.
struct SourceModel {
    Network feature_extractor;
    Network classifier;
    PrototypeBank bank;
    std::size_t class_count = 0;

    Label ood_label() const noexcept { return static_cast<Label>(class_count); }
};

SourceModel make_source_model(std::size_t input_dim, std::size_t class_count, const ArchitectureConfig& arch,
                              Rng& rng);

/// Eval-mode logits / labels of g(f(x)).
Matrix predict_logits(const Network& features, const Network& classifier, const Matrix& x);
std::vector<Label> predict_labels(const Network& features, const Network& classifier, const Matrix& x);
/// Eval-mode mean cross-entropy over the whole dataset.
double dataset_cross_entropy(const SourceModel& model, const SourceDataset& data);
double dataset_accuracy(const SourceModel& model, const SourceDataset& data);

struct Ls2Result {
    double loss = 0.0;
    double source_loss = 0.0;
    double negative_loss = 0.0;
    Gradients feature_grads;
    Gradients classifier_grads;
};

/// Source CE through g(f(x)) plus negative CE through g(u) only.
Ls2Result compute_ls2(SourceModel& model, const Matrix& source_x, std::span<const Label> source_y,
                      const Matrix& negatives, std::span<const Label> negative_y);

/// One warm-up pass of plain cross-entropy per configured warm-up epoch, updating f_s and g_s.
void warmup(SourceModel& model, const SourceDataset& data, const ForesightedConfig& config, Rng& rng);

enum class Objective { Warmup, Ls1, Ls2, CrossEntropy };
std::string_view to_string(Objective o);

struct IterationLog {
    std::size_t iter = 0;
    std::size_t epoch = 0;
    Objective objective = Objective::Ls2;
    double loss = 0.0;
    std::size_t negatives_accepted = 0;
    double k_sigma = 0.0;
};

struct EpochLog {
    std::size_t epoch = 0;
    double mean_ls1 = 0.0;  // NaN when the L_s1 arm is disabled
    double mean_ls2 = 0.0;
    double train_accuracy = 0.0;
    std::size_t negatives_accepted = 0;
};

struct ForesightedResult {
    SourceModel model;
    std::vector<EpochLog> epochs;
    std::vector<IterationLog> iterations;
    std::size_t ls1_updates = 0;
    std::size_t ls2_updates = 0;
    std::size_t negative_shortfalls = 0;
    std::vector<std::string> deviation_flags;
};

/// Warm-up, prototype fit, then per-iteration alternation between the
/// class-separability step (f_s only) and the OOD-aware step (f_s and g_s),
/// refitting prototypes at every epoch boundary. A non-null warm_start
/// continues from its parameters.
ForesightedResult foresighted_train(const SourceDataset& data, const ForesightedConfig& config,
                                    const SourceModel* warm_start = nullptr);

/// Plain cross-entropy training used by the fine-tuning baseline.
struct CrossEntropyResult {
    SourceModel model;
    std::vector<EpochLog> epochs;
};
CrossEntropyResult train_cross_entropy(const SourceDataset& data, const ForesightedConfig& config,
                                       const SourceModel* warm_start = nullptr);

/// Features of the whole dataset in Eval mode, fitted into a bank.
PrototypeBank refit_bank(const SourceModel& model, const SourceDataset& data, double k_sigma, double ridge);

void write_epoch_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);
void write_iteration_log_csv(const std::filesystem::path& path, const std::vector<IterationLog>& log);

}  // namespace alen
