#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "alen/loss.hpp"
#include "alen/matrix.hpp"
#include "alen/nn.hpp"

namespace alen {

struct DomainBatch {
    Matrix features;
    std::optional<std::vector<Label>> labels;
    std::string domain_id;
    std::size_t increment_index = 0;

    std::size_t size() const noexcept { return features.rows(); }
    bool labeled() const noexcept { return labels.has_value(); }
    /// Throws InputError when labels are absent, of the wrong length, or >= class_count.
    void validate(std::size_t class_count) const;
    DomainBatch select(std::span<const std::size_t> rows) const;
    /// Copy with the labels dropped.
    DomainBatch unlabeled() const;
};

/// Labeled source rows with a read counter. Every accessor that exposes
/// feature rows increments reads(); the adapter never receives one of these.
class SourceDataset {
public:
    explicit SourceDataset(DomainBatch batch);

    std::size_t size() const noexcept { return batch_.size(); }
    std::size_t input_dim() const noexcept { return batch_.features.cols(); }
    std::size_t class_count() const noexcept { return class_count_; }

    const Matrix& features() const;
    const std::vector<Label>& labels() const;
    Matrix rows(std::span<const std::size_t> indices) const;
    std::vector<Label> labels_of(std::span<const std::size_t> indices) const;

    std::size_t reads() const noexcept { return reads_.load(); }

private:
    DomainBatch batch_;
    std::size_t class_count_ = 0;
    mutable std::atomic<std::size_t> reads_{0};
};

enum class Generator { GaussianBlobs, TwoMoons };

/// Affine drift applied to canonical features. Rotation acts on the first two
/// coordinates; noise_scale adds isotropic jitter after the transform.
struct ShiftTransform {
    double rotation = 0.0;  // radians
    std::vector<double> translation;  // empty = zero
    double noise_scale = 0.0;
};

struct DriftScenario {
    Generator generator = Generator::GaussianBlobs;
    std::size_t class_count = 3;
    std::size_t dim = 2;
    std::size_t samples_per_domain = 500;
    std::vector<ShiftTransform> shift_schedule;
    std::uint64_t seed = 0;

    double blob_radius = 3.0;
    double blob_std = 1.0;
    double moons_noise = 0.1;
    /// Leading increments that come with labels (labeled source domains).
    std::size_t source_increments = 1;
    /// Isotropic noise added only to test splits.
    double test_noise_scale = 0.0;

    std::size_t increment_count() const noexcept { return shift_schedule.size(); }
    void validate() const;
};

/// Canonical labeled draw followed by the increment's transform.
DomainBatch generate_domain(const DriftScenario& scenario, std::size_t increment_index, Rng& rng);
/// Same, seeded from (scenario.seed, increment_index).
DomainBatch generate_domain(const DriftScenario& scenario, std::size_t increment_index);

/// Applies / inverts the noise-free affine part of a transform.
Matrix apply_transform(const ShiftTransform& t, const Matrix& features);
Matrix invert_transform(const ShiftTransform& t, const Matrix& features);

/// `count` increments whose rotations grow linearly from 0 to total_radians.
std::vector<ShiftTransform> rotation_schedule(std::size_t count, double total_radians);

struct Split {
    DomainBatch train;
    DomainBatch test;
    DomainBatch val;
};

/// Per-class shuffled split; class c contributes round(n_c * f_train) train rows,
/// round(n_c * f_test) test rows and the rest to validation.
Split stratified_split(const DomainBatch& batch, double train, double test, double val, Rng& rng);

DomainBatch load_csv_domain(const std::filesystem::path& path, bool has_labels, std::string domain_id = {});
void write_csv_domain(const std::filesystem::path& path, const DomainBatch& batch);

Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace alen
