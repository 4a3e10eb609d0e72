#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alen/adapter.hpp"
#include "alen/data.hpp"
#include "alen/foresighted.hpp"
#include "alen/metrics.hpp"

namespace alen {

enum class Method { ALEN, FT };
std::string_view to_string(Method m);

struct CsvDomainSpec {
    std::filesystem::path path;
    std::string domain_id;
};

/// Externally prepared feature tables, one labeled CSV per domain in stream order.
struct CsvManifest {
    std::vector<CsvDomainSpec> domains;
    std::size_t source_increments = 1;
};

struct Ablations {
    bool disable_ls1 = false;
    std::optional<double> k_sigma_override;
    /// N_src / N_neg; rescales n_neg relative to n_src.
    std::optional<double> src_neg_ratio;
};

struct ExperimentConfig {
    std::optional<DriftScenario> scenario;
    std::optional<CsvManifest> csv;
    Method method = Method::ALEN;
    ForesightedConfig foresighted;
    AdaptConfig adapt;
    Ablations ablations;
    std::array<double, 3> split{0.8, 0.1, 0.1};
    std::filesystem::path output_dir;  // empty: nothing is written
    std::uint64_t seed = 0;
    bool write_checkpoints = true;

    /// Throws InputError on inconsistent settings.
    void validate() const;
    /// Foresighted settings after ablations and seed propagation.
    ForesightedConfig effective_foresighted() const;
    AdaptConfig effective_adapt() const;
};

/// Parses and validates; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& doc);
/// Echo of every setting including defaults.
nlohmann::json config_to_json(const ExperimentConfig& config);
/// Reads a JSON config file; ALEN_SEED in the environment overrides "seed".
ExperimentConfig load_config(const std::filesystem::path& path);

struct EvalRecord {
    std::size_t increment = 0;
    std::size_t domain = 0;
    std::string domain_id;
    double accuracy = 0.0;
    std::vector<Label> predictions;
    std::vector<Label> labels;
};

struct StageTime {
    std::string stage;
    double seconds = 0.0;
};

struct RunResult {
    Method method = Method::ALEN;
    AccuracyMatrix accuracy_matrix;
    double avg_acc = 0.0;
    std::optional<double> forgetting_pct;
    std::vector<std::string> domain_ids;
    std::vector<EvalRecord> evaluations;
    std::vector<std::vector<EpochLog>> source_epoch_logs;
    std::vector<std::vector<IterationLog>> source_iteration_logs;
    std::vector<std::vector<AdaptLogRow>> adapt_logs;
    std::vector<StageTime> stage_times;
    std::vector<std::string> deviation_flags;
    std::size_t source_reads_during_adaptation = 0;
    std::string evaluation_split = "test";
    nlohmann::json config_echo;
};

nlohmann::json result_to_json(const RunResult& r);
RunResult result_from_json(const nlohmann::json& doc);

/// Domains in stream order, generated or loaded.
std::vector<DomainBatch> load_domains(const ExperimentConfig& config);

RunResult run_experiment(const ExperimentConfig& config);
RunResult run_ft_baseline(const ExperimentConfig& config);

/// Model bundle: {"format_version":1, "class_count":C, "feature_extractor":{...},
/// "classifier":{...}, "discriminator":{...}?}; each network uses the checkpoint format.
nlohmann::json model_bundle_to_json(const Network& f, const Network& g, const Network* d, std::size_t class_count);
struct ModelBundle {
    Network feature_extractor;
    Network classifier;
    std::optional<Network> discriminator;
    std::size_t class_count = 0;
};
ModelBundle model_bundle_from_json(const nlohmann::json& doc);

void write_accuracy_matrix_csv(const std::filesystem::path& path, const RunResult& r);

}  // namespace alen
